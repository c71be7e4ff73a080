//! Prompt strategies and the stimulus registry.
//!
//! Prompt text is byte-stable: the same `(strategy, statement)` pair always
//! renders to the same bytes, and the checked-in goldens under
//! `tests/golden/` pin every pair in the registry.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Independent T, I, F.
    #[serde(rename = "S1")]
    Neutrosophic,
    /// T + I + F constrained to 1.
    #[serde(rename = "S2")]
    Probabilistic,
    /// Binary P_yes/P_no, indeterminacy from entropy.
    #[serde(rename = "S3")]
    EntropyDerived,
    /// T, I, F plus declared losses.
    #[serde(rename = "S4")]
    TensorLosses,
    /// Free-form limitations, no neutrosophic framing.
    #[serde(rename = "S5")]
    Ablation,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Neutrosophic,
        Strategy::Probabilistic,
        Strategy::EntropyDerived,
        Strategy::TensorLosses,
        Strategy::Ablation,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Self::Neutrosophic => "S1",
            Self::Probabilistic => "S2",
            Self::EntropyDerived => "S3",
            Self::TensorLosses => "S4",
            Self::Ablation => "S5",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts the short codes (`S1`..`S5`, case-insensitive) and the
    /// descriptive names used in older archives.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let strategy = match key.as_str() {
            "s1" | "neutrosophic" | "s1_neutrosophic" => Self::Neutrosophic,
            "s2" | "probabilistic" | "s2_probabilistic" => Self::Probabilistic,
            "s3" | "entropy" | "entropy_derived" | "s3_entropy_derived" | "s3_entropy" => {
                Self::EntropyDerived
            }
            "s4" | "tensor" | "tensor_losses" | "s4_tensor" | "s4_tensor_losses" => {
                Self::TensorLosses
            }
            "s5" | "ablation" | "s5_ablation" => Self::Ablation,
            _ => return Err(Error::Domain(format!("unknown strategy `{s}`"))),
        };
        Ok(strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusSet {
    Original,
    Tautology,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub id: String,
    pub category: String,
    pub statement: String,
    pub set: StimulusSet,
}

const STIMULI: [(&str, &str, &str, StimulusSet); 8] = [
    (
        "paradox",
        "Paradox (Logical)",
        "This sentence is false.",
        StimulusSet::Original,
    ),
    (
        "ignorance",
        "Ignorance (Epistemic)",
        "The number of stars in the universe is even.",
        StimulusSet::Original,
    ),
    (
        "vagueness",
        "Vagueness (Fuzzy)",
        "John is 1.75 meters tall, therefore John is tall.",
        StimulusSet::Original,
    ),
    (
        "contradiction",
        "Contradiction (Ethical)",
        "Lying to save an innocent life is morally right and wrong at the same time.",
        StimulusSet::Original,
    ),
    (
        "contingency",
        "Contingency (Future)",
        "It will rain in New York tomorrow.",
        StimulusSet::Original,
    ),
    (
        "taut_math",
        "Tautology (Mathematical)",
        "2+2=4",
        StimulusSet::Tautology,
    ),
    (
        "taut_definitional",
        "Tautology (Definitional)",
        "All bachelors are unmarried",
        StimulusSet::Tautology,
    ),
    (
        "taut_logical",
        "Tautology (Logical)",
        "It is raining or it is not raining",
        StimulusSet::Tautology,
    ),
];

/// The five original stimuli followed by the three tautology controls.
pub fn stimulus_registry() -> Vec<StimulusSpec> {
    STIMULI
        .iter()
        .map(|(id, category, statement, set)| StimulusSpec {
            id: (*id).to_string(),
            category: (*category).to_string(),
            statement: (*statement).to_string(),
            set: *set,
        })
        .collect()
}

pub fn find_stimulus(id: &str) -> Option<StimulusSpec> {
    stimulus_registry().into_iter().find(|s| s.id == id)
}

/// Position of `id` in the registry; unknown ids sort last.
pub fn registry_order(id: &str) -> usize {
    STIMULI.iter().position(|s| s.0 == id).unwrap_or(usize::MAX)
}

/// Ids of the five original stimuli, in registry order.
pub fn original_stimulus_ids() -> Vec<&'static str> {
    STIMULI
        .iter()
        .filter(|s| s.3 == StimulusSet::Original)
        .map(|s| s.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    /// Empty for the ablation strategy.
    pub system: String,
    pub user: String,
}

const S1_SYSTEM: &str = "You are an expert in Neutrosophic Logic. You evaluate statements using three INDEPENDENT dimensions: Truth (T), Indeterminacy (I), and Falsity (F), each on [0.0, 1.0]. These dimensions are NOT constrained to sum to 1.0. A statement can be simultaneously partially true AND partially false AND partially indeterminate. Respond with ONLY a JSON object, no other text.";

const S1_USER: &str = r#"Evaluate this statement on three independent dimensions:

Statement: "{statement}"

- Truth (T): To what degree is this statement true? [0.0 to 1.0]
- Indeterminacy (I): To what degree is the truth value unknown, undetermined, or inherently uncertain? [0.0 to 1.0]
- Falsity (F): To what degree is this statement false? [0.0 to 1.0]

T, I, and F are independent. They need NOT sum to 1.0.

Respond with ONLY: {"T": , "I": , "F": }"#;

const S2_SYSTEM: &str = "You are a probabilistic classifier. You assign probabilities to three mutually exclusive categories that MUST sum to exactly 1.0. Respond with ONLY a JSON object, no other text.";

const S2_USER: &str = r#"Classify this statement into three mutually exclusive categories whose probabilities sum to 1.0:

Statement: "{statement}"

- T (True): Probability the statement is true
- I (Uncertain): Probability the truth value is unknown or undetermined
- F (False): Probability the statement is false

CONSTRAINT: T + I + F must equal 1.0

Respond with ONLY: {"T": , "I": , "F": }"#;

const S3_SYSTEM: &str = "You are a binary truth estimator. You estimate the probability that a statement is true (YES) versus false (NO). The two probabilities must sum to 1.0. Respond with ONLY a JSON object, no other text.";

const S3_USER: &str = r#"Estimate the probability that this statement is true versus false:

Statement: "{statement}"

- P_yes: Probability the statement is true [0.0 to 1.0]
- P_no: Probability the statement is false [0.0 to 1.0]

CONSTRAINT: P_yes + P_no must equal 1.0

Respond with ONLY: {"P_yes": , "P_no": }"#;

const S4_SYSTEM: &str = "You are an expert in Neutrosophic Logic and epistemic honesty. You evaluate statements using three INDEPENDENT dimensions: Truth (T), Indeterminacy (I), and Falsity (F), each on [0.0, 1.0]. These dimensions are NOT constrained to sum to 1.0. Crucially, you must also declare your LOSSES: what you cannot evaluate, what limits your assessment, and why your indeterminacy value is what it is. Respond with ONLY a JSON object, no other text.";

const S4_USER: &str = r#"Evaluate this statement on three independent dimensions, and declare what you cannot evaluate:

Statement: "{statement}"

- Truth (T): To what degree is this statement true? [0.0 to 1.0]
- Indeterminacy (I): To what degree is the truth value unknown, undetermined, or inherently uncertain? [0.0 to 1.0]
- Falsity (F): To what degree is this statement false? [0.0 to 1.0]
- losses: A list of objects, each with:
  - "what": What you cannot evaluate (brief description)
  - "why": Why this limits your assessment
  - "severity": How much this affects your evaluation [0.0 to 1.0]

T, I, and F are independent. They need NOT sum to 1.0. You MUST declare at least one loss. Honesty about limits is required.

Respond with ONLY: {"T": , "I": , "F": , "losses": [{"what": "", "why": "", "severity": }, ...]}"#;

/// The single ablation instruction.
pub const S5_INSTRUCTION: &str = "Identify any limitations, uncertainties, or difficulties in determining whether this statement is true or false.";

const S5_USER: &str = r#"Identify any limitations, uncertainties, or difficulties in determining whether this statement is true or false.

Statement: "{statement}""#;

fn templates(strategy: Strategy) -> (&'static str, &'static str) {
    match strategy {
        Strategy::Neutrosophic => (S1_SYSTEM, S1_USER),
        Strategy::Probabilistic => (S2_SYSTEM, S2_USER),
        Strategy::EntropyDerived => (S3_SYSTEM, S3_USER),
        Strategy::TensorLosses => (S4_SYSTEM, S4_USER),
        Strategy::Ablation => ("", S5_USER),
    }
}

/// Renders the system/user messages for `strategy` with `statement`
/// substituted verbatim between plain double quotes.
pub fn build_prompt(strategy: Strategy, statement: &str) -> Result<PromptPair> {
    if statement.trim().is_empty() {
        return Err(Error::Domain("statement is empty".into()));
    }
    let (system, user) = templates(strategy);
    Ok(PromptPair {
        system: system.to_string(),
        user: user.replacen("{statement}", statement, 1),
    })
}
