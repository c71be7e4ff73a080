//! Experiment grid execution against OpenAI-compatible chat endpoints,
//! raw transcript archival, and a local mock endpoint.

mod client;
mod config;
mod mock;
mod transcript;

pub use client::{completion_text, request_body, Gateway};
pub use config::{ModelSpec, RunConfig, DEFAULT_API_KEY_ENV};
pub use mock::{load_fixtures, mock_endpoint, MockFixture, MockServer};
pub use transcript::{
    ArchiveWriter, RawTranscript, RunArchive, TransportStatus, ARCHIVE_FORMAT, ARCHIVE_VERSION,
};
