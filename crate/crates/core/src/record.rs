use serde::{Deserialize, Serialize};

use crate::parser::{parse_trial, ParseOutcome};
use crate::protocol::Strategy;
use crate::tif::{LossDeclaration, ScalarTif};

/// One model x stimulus x strategy x repetition outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: String,
    pub provider: String,
    pub stimulus: String,
    pub category: String,
    pub strategy: Strategy,
    /// 1-based.
    pub rep: u32,
    pub outcome: ParseOutcome,
    pub sum: Option<f64>,
    pub hyper_truth: Option<bool>,
    pub raw_text: String,
}

/// Row identity shared by every record of one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialKey {
    pub model: String,
    pub provider: String,
    pub stimulus: String,
    pub category: String,
    pub strategy: Strategy,
    pub rep: u32,
}

impl TrialRecord {
    /// Builds a record from an already-typed outcome, deriving `sum` and
    /// `hyper_truth` from the scalar it carries.
    pub fn new(key: TrialKey, outcome: ParseOutcome, raw_text: impl Into<String>) -> Self {
        let scalar = outcome.scalar();
        Self {
            model: key.model,
            provider: key.provider,
            stimulus: key.stimulus,
            category: key.category,
            strategy: key.strategy,
            rep: key.rep,
            sum: scalar.map(|s| s.sum()),
            hyper_truth: scalar.map(|s| s.is_hyper_truth()),
            outcome,
            raw_text: raw_text.into(),
        }
    }

    /// Parses `raw_text` under the key's strategy.
    pub fn from_raw(key: TrialKey, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let outcome = parse_trial(&raw_text, key.strategy);
        Self::new(key, outcome, raw_text)
    }

    pub fn is_valid(&self) -> bool {
        self.outcome.is_valid()
    }

    pub fn scalar(&self) -> Option<ScalarTif> {
        self.outcome.scalar()
    }

    /// Declared losses; empty unless the outcome is a valid tensor.
    pub fn losses(&self) -> &[LossDeclaration] {
        self.outcome.tensor().map(|t| t.losses.as_slice()).unwrap_or(&[])
    }

    pub fn max_severity(&self) -> Option<f64> {
        self.outcome.tensor().and_then(|t| t.max_severity())
    }

    pub fn mean_severity(&self) -> Option<f64> {
        self.outcome.tensor().and_then(|t| t.mean_severity())
    }

    pub fn free_text(&self) -> Option<&str> {
        match &self.outcome {
            ParseOutcome::ValidFreeText { text } => Some(text),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(strategy: Strategy) -> TrialKey {
        TrialKey {
            model: "m".into(),
            provider: "p".into(),
            stimulus: "paradox".into(),
            category: "Paradox (Logical)".into(),
            strategy,
            rep: 1,
        }
    }

    #[test]
    fn derived_fields_present_iff_scalar() {
        let r = TrialRecord::from_raw(key(Strategy::Neutrosophic), r#"{"T":0.5,"I":0.5,"F":0.5}"#);
        assert_eq!(r.sum, Some(1.5));
        assert_eq!(r.hyper_truth, Some(true));

        let r = TrialRecord::from_raw(key(Strategy::Neutrosophic), "garbage");
        assert_eq!(r.sum, None);
        assert_eq!(r.hyper_truth, None);

        let r = TrialRecord::from_raw(key(Strategy::Ablation), "some prose");
        assert!(r.is_valid());
        assert_eq!(r.sum, None);
        assert_eq!(r.free_text(), Some("some prose"));
    }

    #[test]
    fn s3_records_are_hyper_truth_inside_unit_interval() {
        let r = TrialRecord::from_raw(key(Strategy::EntropyDerived), r#"{"P_yes":0.3,"P_no":0.7}"#);
        assert_eq!(r.hyper_truth, Some(true));
        let r = TrialRecord::from_raw(key(Strategy::EntropyDerived), r#"{"P_yes":1.0,"P_no":0.0}"#);
        assert_eq!(r.hyper_truth, Some(false));
    }
}
