//! Raw completion text to typed evaluations.
//!
//! Failure taxonomy:
//! - `Truncated`: an opening brace exists but no balanced object closes it.
//! - `Garbled`: no brace at all, or no balanced span decodes as a JSON object.
//! - `OutOfRange`, `MissingField`, `ConstraintViolated`: the object decodes but
//!   fails validation.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::fmt;

use crate::protocol::Strategy;
use crate::tif::{
    s3_to_tif, BinaryEstimate, LossDeclaration, ScalarTif, TensorEvaluation, BINARY_SUM_TOLERANCE,
};

/// Largest `|T + I + F - 1|` accepted without flagging an S2 response.
pub const S2_SUM_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Garbled,
    Truncated,
    OutOfRange,
    MissingField,
    ConstraintViolated,
}

impl FailureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Garbled => "garbled",
            Self::Truncated => "truncated",
            Self::OutOfRange => "out_of_range",
            Self::MissingField => "missing_field",
            Self::ConstraintViolated => "constraint_violated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "garbled" => Self::Garbled,
            "truncated" => Self::Truncated,
            "out_of_range" => Self::OutOfRange,
            "missing_field" => Self::MissingField,
            "constraint_violated" => Self::ConstraintViolated,
            _ => return None,
        })
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseOutcome {
    ValidScalar {
        scalar: ScalarTif,
        /// Set for S2 responses whose sum misses 1.0 by more than
        /// [`S2_SUM_TOLERANCE`]. The row is kept.
        constraint_flagged: bool,
    },
    ValidBinary {
        estimate: BinaryEstimate,
    },
    ValidTensor {
        tensor: TensorEvaluation,
    },
    ValidFreeText {
        text: String,
    },
    Failure {
        failure: FailureKind,
        detail: String,
    },
}

impl ParseOutcome {
    pub fn is_valid(&self) -> bool {
        !matches!(self, Self::Failure { .. })
    }

    /// The T/I/F triple carried by the outcome, deriving it for S3.
    pub fn scalar(&self) -> Option<ScalarTif> {
        match self {
            Self::ValidScalar { scalar, .. } => Some(*scalar),
            Self::ValidBinary { estimate } => Some(s3_to_tif(estimate)),
            Self::ValidTensor { tensor } => Some(tensor.scalar),
            _ => None,
        }
    }

    pub fn tensor(&self) -> Option<&TensorEvaluation> {
        match self {
            Self::ValidTensor { tensor } => Some(tensor),
            _ => None,
        }
    }

    pub fn failure(&self) -> Option<FailureKind> {
        match self {
            Self::Failure { failure, .. } => Some(*failure),
            _ => None,
        }
    }

    fn fail(failure: FailureKind, detail: impl Into<String>) -> Self {
        Self::Failure {
            failure,
            detail: detail.into(),
        }
    }
}

/// Yields every balanced top-level `{...}` span in `text`, in order.
///
/// Braces inside JSON string literals are ignored once an object is open.
/// Scanning stops at the first opening brace that never closes.
pub fn json_spans(text: &str) -> JsonSpans<'_> {
    JsonSpans { text, pos: 0 }
}

pub struct JsonSpans<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Iterator for JsonSpans<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let bytes = self.text.as_bytes();
        let start = self.pos + self.text[self.pos..].find('{')?;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (offset, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        let end = start + offset + 1;
                        self.pos = end;
                        return Some(&self.text[start..end]);
                    }
                }
                _ => {}
            }
        }
        self.pos = self.text.len();
        None
    }
}

/// The first balanced top-level `{...}` span, if any.
pub fn extract_json_span(text: &str) -> Option<&str> {
    json_spans(text).next()
}

fn first_object(text: &str) -> Result<Map<String, Value>, ParseOutcome> {
    let mut saw_span = false;
    for span in json_spans(text) {
        saw_span = true;
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(span) {
            return Ok(map);
        }
    }
    if let Some(offset) = text.find('{') {
        if !saw_span {
            return Err(ParseOutcome::fail(
                FailureKind::Truncated,
                format!("unbalanced object opened at byte {offset}"),
            ));
        }
        return Err(ParseOutcome::fail(
            FailureKind::Garbled,
            format!("no balanced span decodes as a JSON object (first brace at byte {offset})"),
        ));
    }
    Err(ParseOutcome::fail(FailureKind::Garbled, "no JSON object in response"))
}

fn unit_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64, ParseOutcome> {
    let value = obj
        .get(key)
        .ok_or_else(|| ParseOutcome::fail(FailureKind::MissingField, format!("{path}{key}")))?;
    let number = value.as_f64().ok_or_else(|| {
        ParseOutcome::fail(
            FailureKind::MissingField,
            format!("{path}{key} is not a number"),
        )
    })?;
    if !(0.0..=1.0).contains(&number) {
        return Err(ParseOutcome::fail(
            FailureKind::OutOfRange,
            format!("{path}{key} = {number}"),
        ));
    }
    Ok(number)
}

fn scalar_fields(obj: &Map<String, Value>) -> Result<ScalarTif, ParseOutcome> {
    let t = unit_field(obj, "T", "")?;
    let i = unit_field(obj, "I", "")?;
    let f = unit_field(obj, "F", "")?;
    Ok(ScalarTif::new(t, i, f).expect("components validated above"))
}

fn text_field(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, ParseOutcome> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseOutcome::fail(
            FailureKind::MissingField,
            format!("{path}{key} is not a string"),
        )),
        None => Err(ParseOutcome::fail(
            FailureKind::MissingField,
            format!("{path}{key}"),
        )),
    }
}

fn losses_field(obj: &Map<String, Value>) -> Result<Vec<LossDeclaration>, ParseOutcome> {
    let items = match obj.get("losses") {
        Some(Value::Array(items)) => items,
        Some(_) => {
            return Err(ParseOutcome::fail(
                FailureKind::MissingField,
                "losses is not an array",
            ))
        }
        None => return Err(ParseOutcome::fail(FailureKind::MissingField, "losses")),
    };
    if items.is_empty() {
        return Err(ParseOutcome::fail(FailureKind::MissingField, "losses empty"));
    }
    let mut losses = Vec::with_capacity(items.len());
    for (idx, item) in items.iter().enumerate() {
        let path = format!("losses[{idx}].");
        let Value::Object(loss) = item else {
            return Err(ParseOutcome::fail(
                FailureKind::MissingField,
                format!("losses[{idx}] is not an object"),
            ));
        };
        let what = text_field(loss, "what", &path)?;
        if what.trim().is_empty() {
            return Err(ParseOutcome::fail(
                FailureKind::MissingField,
                format!("{path}what empty"),
            ));
        }
        let why = text_field(loss, "why", &path)?;
        let severity = unit_field(loss, "severity", &path)?;
        losses.push(LossDeclaration {
            what,
            why,
            severity,
        });
    }
    Ok(losses)
}

fn parse_structured(text: &str, strategy: Strategy) -> Result<ParseOutcome, ParseOutcome> {
    let obj = first_object(text)?;
    let outcome = match strategy {
        Strategy::Neutrosophic => ParseOutcome::ValidScalar {
            scalar: scalar_fields(&obj)?,
            constraint_flagged: false,
        },
        Strategy::Probabilistic => {
            let scalar = scalar_fields(&obj)?;
            let sum = scalar.sum();
            ParseOutcome::ValidScalar {
                scalar,
                constraint_flagged: (sum - 1.0).abs() > S2_SUM_TOLERANCE,
            }
        }
        Strategy::EntropyDerived => {
            let p_yes = unit_field(&obj, "P_yes", "")?;
            let p_no = unit_field(&obj, "P_no", "")?;
            let estimate = BinaryEstimate::new(p_yes, p_no).map_err(|_| {
                ParseOutcome::fail(
                    FailureKind::ConstraintViolated,
                    format!(
                        "P_yes + P_no = {} (tolerance {BINARY_SUM_TOLERANCE})",
                        p_yes + p_no
                    ),
                )
            })?;
            ParseOutcome::ValidBinary { estimate }
        }
        Strategy::TensorLosses => {
            let scalar = scalar_fields(&obj)?;
            let losses = losses_field(&obj)?;
            ParseOutcome::ValidTensor {
                tensor: TensorEvaluation { scalar, losses },
            }
        }
        Strategy::Ablation => unreachable!("free text is handled by the caller"),
    };
    Ok(outcome)
}

/// Parses one completion under `strategy`. Total over arbitrary input.
pub fn parse_trial(text: &str, strategy: Strategy) -> ParseOutcome {
    if strategy == Strategy::Ablation {
        return ParseOutcome::ValidFreeText {
            text: text.to_string(),
        };
    }
    parse_structured(text, strategy).unwrap_or_else(|failure| failure)
}

/// Serializes a tensor the way the prompt asks models to answer.
pub fn tensor_to_json(tensor: &TensorEvaluation) -> String {
    let losses: Vec<Value> = tensor
        .losses
        .iter()
        .map(|l| serde_json::json!({"what": l.what, "why": l.why, "severity": l.severity}))
        .collect();
    serde_json::json!({
        "T": tensor.scalar.t(),
        "I": tensor.scalar.i(),
        "F": tensor.scalar.f(),
        "losses": losses,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as _;

    fn failure_of(text: &str, strategy: Strategy) -> FailureKind {
        parse_trial(text, strategy)
            .failure()
            .unwrap_or_else(|| panic!("expected failure for {text:?}"))
    }

    #[test]
    fn span_of_bare_object() {
        let text = r#"{"T": 0.5, "I": 1.0, "F": 0.5}"#;
        assert_eq!(extract_json_span(text), Some(text));
    }

    #[test]
    fn span_strips_prose() {
        let text = r#"Here is my answer: {"T": 0.0, "I": 1.0, "F": 0.0} Hope that helps"#;
        assert_eq!(
            extract_json_span(text),
            Some(r#"{"T": 0.0, "I": 1.0, "F": 0.0}"#)
        );
    }

    #[test]
    fn span_strips_code_fence() {
        let text = "```json\n{\"T\": 0.2, \"I\": 0.3, \"F\": 0.5}\n```";
        assert_eq!(
            extract_json_span(text),
            Some("{\"T\": 0.2, \"I\": 0.3, \"F\": 0.5}")
        );
    }

    #[test]
    fn unbalanced_span_is_absent() {
        assert_eq!(
            extract_json_span(r#"{"T": 0.1, "I": 0.9, "losses": [{"what": "unterm"#),
            None
        );
    }

    #[test]
    fn braces_inside_strings_do_not_count() {
        let text = r#"{"T": 0.1, "I": 0.9, "F": 0.0, "note": "a } brace \" and {"}"#;
        assert_eq!(extract_json_span(text), Some(text));
    }

    #[test]
    fn valid_s1() {
        let out = parse_trial(r#"{"T": 0.5, "I": 1.0, "F": 0.5}"#, Strategy::Neutrosophic);
        assert_eq!(
            out.scalar().unwrap(),
            ScalarTif::new(0.5, 1.0, 0.5).unwrap()
        );
    }

    #[test]
    fn s1_out_of_range() {
        assert_eq!(
            failure_of(r#"{"T": 1.2, "I": 0.0, "F": 0.0}"#, Strategy::Neutrosophic),
            FailureKind::OutOfRange
        );
    }

    #[test]
    fn s1_missing_key() {
        assert_eq!(
            failure_of(r#"{"T": 0.2, "I": 0.0}"#, Strategy::Neutrosophic),
            FailureKind::MissingField
        );
        assert_eq!(
            failure_of(r#"{"t": 0.2, "i": 0.0, "f": 0.1}"#, Strategy::Neutrosophic),
            FailureKind::MissingField
        );
    }

    #[test]
    fn extra_keys_are_ignored() {
        let out = parse_trial(
            r#"{"T": 0.2, "I": 0.3, "F": 0.1, "reasoning": "because"}"#,
            Strategy::Neutrosophic,
        );
        assert!(out.is_valid());
    }

    #[test]
    fn s2_violation_is_flagged_not_failed() {
        match parse_trial(r#"{"T": 0.5, "I": 0.5, "F": 0.5}"#, Strategy::Probabilistic) {
            ParseOutcome::ValidScalar {
                constraint_flagged, ..
            } => assert!(constraint_flagged),
            other => panic!("{other:?}"),
        }
        match parse_trial(r#"{"T": 0.33, "I": 0.56, "F": 0.11}"#, Strategy::Probabilistic) {
            ParseOutcome::ValidScalar {
                constraint_flagged, ..
            } => assert!(!constraint_flagged),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn s3_binary() {
        let out = parse_trial(r#"{"P_yes": 0.9, "P_no": 0.1}"#, Strategy::EntropyDerived);
        let s = out.scalar().unwrap();
        assert!((s.i() - 0.469).abs() < 1e-3);
        assert_eq!(
            failure_of(r#"{"P_yes": 0.9, "P_no": 0.2}"#, Strategy::EntropyDerived),
            FailureKind::ConstraintViolated
        );
        assert_eq!(
            failure_of(r#"{"P_yes": 0.9}"#, Strategy::EntropyDerived),
            FailureKind::MissingField
        );
    }

    #[test]
    fn s4_tensor_with_losses() {
        let text = r#"{"T": 0.0, "I": 1.0, "F": 0.0, "losses": [
            {"what": "Self-referential paradox resolution", "why": "The sentence refers to its own truth value.", "severity": 1.0},
            {"what": "Formal system dependency", "why": "Depends on the chosen logic.", "severity": 0.8}]}"#;
        let out = parse_trial(text, Strategy::TensorLosses);
        let tensor = out.tensor().expect("valid tensor");
        assert_eq!(tensor.losses.len(), 2);
        assert_eq!(tensor.losses[0].what, "Self-referential paradox resolution");
        assert_eq!(tensor.losses[0].severity, 1.0);
    }

    #[test]
    fn s4_failures() {
        assert_eq!(
            failure_of(r#"{"T": 0.0, "I": 1.0, "F": 0.0, "losses": []}"#, Strategy::TensorLosses),
            FailureKind::MissingField
        );
        match parse_trial(r#"{"T": 0.0, "I": 1.0, "F": 0.0, "losses": []}"#, Strategy::TensorLosses) {
            ParseOutcome::Failure { detail, .. } => assert_eq!(detail, "losses empty"),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            failure_of(
                r#"{"T": 0.0, "I": 1.0, "F": 0.0, "losses": [{"what": "x", "why": "y", "severity": 1.5}]}"#,
                Strategy::TensorLosses
            ),
            FailureKind::OutOfRange
        );
        assert_eq!(
            failure_of(
                r#"{"T": 0.0, "I": 1.0, "F": 0.0, "losses": [{"what": " ", "why": "y", "severity": 0.5}]}"#,
                Strategy::TensorLosses
            ),
            FailureKind::MissingField
        );
        assert_eq!(
            failure_of(
                r#"{"T": 0.1, "I": 0.9, "F": 0.0, "losses": [{"what": "unterm"#,
                Strategy::TensorLosses
            ),
            FailureKind::Truncated
        );
    }

    #[test]
    fn garbled_vs_truncated() {
        assert_eq!(failure_of("", Strategy::Neutrosophic), FailureKind::Garbled);
        assert_eq!(
            failure_of("I cannot answer that.", Strategy::Neutrosophic),
            FailureKind::Garbled
        );
        assert_eq!(
            failure_of("{not json at all}", Strategy::Neutrosophic),
            FailureKind::Garbled
        );
        assert_eq!(
            failure_of(r#"{"T": 0.5, "I": "#, Strategy::Neutrosophic),
            FailureKind::Truncated
        );
    }

    #[test]
    fn skips_non_json_brace_spans() {
        let out = parse_trial(
            r#"Using {braces} loosely: {"T": 0.5, "I": 0.5, "F": 0.5}"#,
            Strategy::Neutrosophic,
        );
        assert!(out.is_valid());
    }

    #[test]
    fn s5_is_always_free_text() {
        assert!(matches!(
            parse_trial("", Strategy::Ablation),
            ParseOutcome::ValidFreeText { .. }
        ));
        assert!(matches!(
            parse_trial("{", Strategy::Ablation),
            ParseOutcome::ValidFreeText { .. }
        ));
    }

    fn arb_loss() -> impl proptest::strategy::Strategy<Value = LossDeclaration> {
        ("[a-zA-Z][a-zA-Z '\\-\"{}]{0,30}", ".{0,40}", 0.0..=1.0f64)
            .prop_map(|(what, why, severity)| LossDeclaration { what, why, severity })
    }

    proptest! {
        #[test]
        fn parse_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let text = String::from_utf8_lossy(&bytes);
            for s in Strategy::ALL {
                let _ = parse_trial(&text, s);
            }
        }

        #[test]
        fn tensor_round_trips(
            t in 0.0..=1.0f64, i in 0.0..=1.0f64, f in 0.0..=1.0f64,
            losses in proptest::collection::vec(arb_loss(), 1..5),
        ) {
            let tensor = TensorEvaluation { scalar: ScalarTif::new(t, i, f).unwrap(), losses };
            let text = tensor_to_json(&tensor);
            let back = parse_trial(&text, Strategy::TensorLosses);
            prop_assert_eq!(back.tensor(), Some(&tensor));
        }
    }
}
