use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::protocol::{find_stimulus, Strategy};
use crate::record::{TrialKey, TrialRecord};

pub const ARCHIVE_FORMAT: &str = "neutrotensor-transcripts";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    HttpError { code: u16 },
    Timeout,
    ExhaustedRetries,
    /// Connection could not be established or the body could not be read.
    Unreachable { message: String },
}

impl TransportStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok)
    }
}

/// One request/response exchange, stored before any parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTranscript {
    pub model: String,
    pub stimulus: String,
    pub strategy: Strategy,
    /// 1-based.
    pub rep: u32,
    /// Exact request body bytes sent on the wire.
    pub request: String,
    /// Completion content of the first choice, or empty.
    pub response: String,
    pub status: TransportStatus,
    pub attempts: u32,
    pub started_ms: u64,
    pub finished_ms: u64,
}

impl RawTranscript {
    /// Copy with both timestamps zeroed, for comparing runs.
    pub fn without_timestamps(&self) -> Self {
        Self {
            started_ms: 0,
            finished_ms: 0,
            ..self.clone()
        }
    }

    pub fn cell(&self) -> (String, String, Strategy) {
        (self.model.clone(), self.stimulus.clone(), self.strategy)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: RunConfig,
}

/// Appends transcripts to an NDJSON file, one flushed line each.
///
/// The first line is a header carrying the config snapshot.
pub struct ArchiveWriter {
    out: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl ArchiveWriter {
    pub fn create(path: &Path, config: &RunConfig) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = Self {
            out: std::io::BufWriter::new(file),
            path: path.to_path_buf(),
        };
        let header = Header {
            format: ARCHIVE_FORMAT.into(),
            version: ARCHIVE_VERSION,
            config: config.clone(),
        };
        writer.write_line(&serde_json::to_string(&header)?)?;
        Ok(writer)
    }

    pub fn append(&mut self, transcript: &RawTranscript) -> Result<()> {
        self.write_line(&serde_json::to_string(transcript)?)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let path = &self.path;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// A run's config snapshot and its transcripts in archive order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArchive {
    pub config: RunConfig,
    pub transcripts: Vec<RawTranscript>,
}

impl RunArchive {
    /// Reads an archive. A torn final line, as left by a crash mid-write,
    /// is dropped with a warning.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(path, e))?;
        let mut lines = lines.into_iter().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::schema(path, "archive is empty"))?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| Error::schema(path, format!("line 1: bad header: {e}")))?;
        if header.format != ARCHIVE_FORMAT || header.version != ARCHIVE_VERSION {
            return Err(Error::schema(
                path,
                format!("unsupported archive {} v{}", header.format, header.version),
            ));
        }
        let rest: Vec<(usize, String)> = lines.collect();
        let last = rest.len();
        let mut transcripts = Vec::with_capacity(last);
        for (k, (idx, line)) in rest.into_iter().enumerate() {
            match serde_json::from_str::<RawTranscript>(&line) {
                Ok(t) => transcripts.push(t),
                Err(e) if k + 1 == last && e.is_eof() => {
                    tracing::warn!("{}: dropping torn final line {}", path.display(), idx + 1);
                }
                Err(e) => {
                    return Err(Error::schema(path, format!("line {}: {e}", idx + 1)));
                }
            }
        }
        Ok(Self {
            config: header.config,
            transcripts,
        })
    }

    /// Cells of the configured grid with fewer transcripts than
    /// `repetitions`, with the count found.
    pub fn missing_cells(&self) -> Vec<((String, String, Strategy), u32)> {
        let mut found: BTreeMap<(String, String, Strategy), u32> = BTreeMap::new();
        for t in &self.transcripts {
            *found.entry(t.cell()).or_default() += 1;
        }
        let mut missing = Vec::new();
        for m in &self.config.models {
            for s in &self.config.stimuli {
                for &st in &self.config.strategies {
                    let key = (m.slug.clone(), s.clone(), st);
                    let n = found.get(&key).copied().unwrap_or(0);
                    if n < self.config.repetitions {
                        missing.push((key, n));
                    }
                }
            }
        }
        missing
    }

    /// Parses every transcript into a record. Transport failures carry an
    /// empty response and so surface as parse failures.
    pub fn to_records(&self) -> Vec<TrialRecord> {
        self.transcripts
            .iter()
            .map(|t| {
                let provider = self
                    .config
                    .model(&t.model)
                    .map(|m| m.provider.clone())
                    .unwrap_or_default();
                let category = find_stimulus(&t.stimulus)
                    .map(|s| s.category)
                    .unwrap_or_default();
                TrialRecord::from_raw(
                    TrialKey {
                        model: t.model.clone(),
                        provider,
                        stimulus: t.stimulus.clone(),
                        category,
                        strategy: t.strategy,
                        rep: t.rep,
                    },
                    t.response.clone(),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::config::ModelSpec;

    fn config() -> RunConfig {
        let mut c = RunConfig::new(
            "http://localhost",
            vec![ModelSpec::new("m", "M", "P")],
            vec!["paradox".into()],
            vec![Strategy::Neutrosophic],
        );
        c.repetitions = 2;
        c
    }

    fn transcript(rep: u32, response: &str) -> RawTranscript {
        RawTranscript {
            model: "m".into(),
            stimulus: "paradox".into(),
            strategy: Strategy::Neutrosophic,
            rep,
            request: "{}".into(),
            response: response.into(),
            status: TransportStatus::Ok,
            attempts: 1,
            started_ms: 10,
            finished_ms: 20,
        }
    }

    #[test]
    fn write_then_load_and_report_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ndjson");
        let mut w = ArchiveWriter::create(&path, &config()).unwrap();
        w.append(&transcript(1, r#"{"T":0.5,"I":1.0,"F":0.5}"#)).unwrap();
        drop(w);
        let a = RunArchive::load(&path).unwrap();
        assert_eq!(a.transcripts.len(), 1);
        assert_eq!(a.missing_cells().len(), 1);
        assert_eq!(a.missing_cells()[0].1, 1);
        let recs = a.to_records();
        assert_eq!(recs[0].provider, "P");
        assert_eq!(recs[0].category, "Paradox (Logical)");
        assert_eq!(recs[0].sum, Some(2.0));
    }

    #[test]
    fn torn_tail_is_dropped_but_torn_middle_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ndjson");
        let mut w = ArchiveWriter::create(&path, &config()).unwrap();
        w.append(&transcript(1, "x")).unwrap();
        drop(w);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str(r#"{"model":"m","stim"#);
        std::fs::write(&path, &text).unwrap();
        assert_eq!(RunArchive::load(&path).unwrap().transcripts.len(), 1);

        text.push('\n');
        text.push_str(&serde_json::to_string(&transcript(2, "y")).unwrap());
        std::fs::write(&path, &text).unwrap();
        assert!(matches!(RunArchive::load(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn empty_archive_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ndjson");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(RunArchive::load(&path), Err(Error::Schema { .. })));
    }
}
