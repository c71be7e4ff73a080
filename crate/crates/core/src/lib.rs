//! Neutrosophic T/I/F evaluation of chat models: prompt construction, live
//! and mocked collection over an OpenAI-compatible endpoint, parsing into
//! scalar and tensor records, and the analysis battery over those records.

pub mod error;
pub mod gateway;
pub mod metrics;
pub mod parser;
pub mod protocol;
pub mod record;
pub mod report;
pub mod tif;

pub use error::{Error, Result};
pub use parser::{extract_json_span, parse_trial, FailureKind, ParseOutcome};
pub use protocol::{build_prompt, stimulus_registry, PromptPair, StimulusSpec, Strategy};
pub use record::{TrialKey, TrialRecord};
pub use tif::{
    classify_position, entropy_indeterminacy, s3_to_tif, BinaryEstimate, EpistemicPosition,
    LossDeclaration, ScalarTif, TensorEvaluation,
};
