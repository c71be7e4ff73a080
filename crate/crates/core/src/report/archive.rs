//! Canonical parsed-archive CSV and record-per-evaluation JSON documents.

use serde_json::Value;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::parser::{FailureKind, ParseOutcome, S2_SUM_TOLERANCE};
use crate::protocol::Strategy;
use crate::record::{TrialKey, TrialRecord};
use crate::tif::{BinaryEstimate, LossDeclaration, ScalarTif, TensorEvaluation};

pub const SCHEMA_VERSION: &str = "1.0";
pub const SCHEMA_MAJOR: u32 = 1;

pub const COLUMNS: [&str; 17] = [
    "schema_version",
    "model",
    "provider",
    "phenomenon",
    "category",
    "strategy",
    "rep",
    "T",
    "I",
    "F",
    "sum",
    "p_yes",
    "p_no",
    "losses",
    "parse_status",
    "parse_detail",
    "raw_text",
];

pub const STATUS_VALID: &str = "valid";
const FLAG_DETAIL: &str = "constraint_flagged";

fn num(v: f64) -> String {
    format!("{v}")
}

/// Serializes declared losses as the JSON array the prompt asks for.
pub fn losses_to_json(losses: &[LossDeclaration]) -> String {
    let items: Vec<Value> = losses
        .iter()
        .map(|l| serde_json::json!({"what": l.what, "why": l.why, "severity": l.severity}))
        .collect();
    Value::Array(items).to_string()
}

/// One CSV row for `record`, in [`COLUMNS`] order.
pub fn archive_row(record: &TrialRecord) -> Vec<String> {
    let blank = String::new;
    let scalar = record.scalar();
    let (t, i, f, sum) = match scalar {
        Some(s) => (num(s.t()), num(s.i()), num(s.f()), num(s.sum())),
        None => (blank(), blank(), blank(), blank()),
    };
    let (p_yes, p_no) = match &record.outcome {
        ParseOutcome::ValidBinary { estimate } => (num(estimate.p_yes()), num(estimate.p_no())),
        _ => (blank(), blank()),
    };
    let losses = record
        .outcome
        .tensor()
        .map(|t| losses_to_json(&t.losses))
        .unwrap_or_default();
    let (status, detail) = match &record.outcome {
        ParseOutcome::Failure { failure, detail } => (failure.as_str().to_string(), detail.clone()),
        ParseOutcome::ValidScalar {
            constraint_flagged: true,
            ..
        } => (STATUS_VALID.to_string(), FLAG_DETAIL.to_string()),
        _ => (STATUS_VALID.to_string(), blank()),
    };
    vec![
        SCHEMA_VERSION.to_string(),
        record.model.clone(),
        record.provider.clone(),
        record.stimulus.clone(),
        record.category.clone(),
        record.strategy.code().to_string(),
        record.rep.to_string(),
        t,
        i,
        f,
        sum,
        p_yes,
        p_no,
        losses,
        status,
        detail,
        record.raw_text.clone(),
    ]
}

pub fn write_archive_csv<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(archive_row(r))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn save_archive_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_archive_csv(std::io::BufWriter::new(file), records)
}

struct Row<'a> {
    path: &'a Path,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn get(&self, column: &str) -> &str {
        let idx = COLUMNS.iter().position(|c| *c == column).expect("known column");
        self.record.get(idx).unwrap_or("")
    }

    fn err(&self, column: &str, message: impl std::fmt::Display) -> Error {
        Error::schema(
            self.path,
            format!("line {}, column `{column}`: {message}", self.line),
        )
    }

    fn real(&self, column: &str) -> Result<f64> {
        let raw = self.get(column).trim();
        raw.parse::<f64>()
            .map_err(|_| self.err(column, format!("expected a number, found `{raw}`")))
    }

    fn check_blank(&self, columns: &[&str]) -> Result<()> {
        for c in columns {
            if !self.get(c).trim().is_empty() {
                return Err(self.err(c, "must be empty for a failed parse"));
            }
        }
        Ok(())
    }
}

fn outcome_from_row(row: &Row<'_>, strategy: Strategy) -> Result<ParseOutcome> {
    let status = row.get("parse_status").trim();
    if status != STATUS_VALID {
        let failure = FailureKind::parse(status)
            .ok_or_else(|| row.err("parse_status", format!("unknown status `{status}`")))?;
        row.check_blank(&["T", "I", "F", "sum", "p_yes", "p_no", "losses"])?;
        return Ok(ParseOutcome::Failure {
            failure,
            detail: row.get("parse_detail").to_string(),
        });
    }
    let scalar = || -> Result<ScalarTif> {
        ScalarTif::new(row.real("T")?, row.real("I")?, row.real("F")?)
            .map_err(|e| row.err("T", e))
    };
    Ok(match strategy {
        Strategy::Neutrosophic => ParseOutcome::ValidScalar {
            scalar: scalar()?,
            constraint_flagged: false,
        },
        Strategy::Probabilistic => {
            let s = scalar()?;
            ParseOutcome::ValidScalar {
                constraint_flagged: (s.sum() - 1.0).abs() > S2_SUM_TOLERANCE,
                scalar: s,
            }
        }
        Strategy::EntropyDerived => ParseOutcome::ValidBinary {
            estimate: BinaryEstimate::new(row.real("p_yes")?, row.real("p_no")?)
                .map_err(|e| row.err("p_yes", e))?,
        },
        Strategy::TensorLosses => {
            let losses: Vec<LossDeclaration> = serde_json::from_str::<Vec<LossDeclaration>>(row.get("losses"))
                .map_err(|e| row.err("losses", e))?
                .into_iter()
                .map(|l| LossDeclaration::new(l.what, l.why, l.severity))
                .collect::<Result<_>>()
                .map_err(|e| row.err("losses", e))?;
            if losses.is_empty() {
                return Err(row.err("losses", "a valid tensor row needs at least one loss"));
            }
            ParseOutcome::ValidTensor {
                tensor: TensorEvaluation {
                    scalar: scalar()?,
                    losses,
                },
            }
        }
        Strategy::Ablation => ParseOutcome::ValidFreeText {
            text: row.get("raw_text").to_string(),
        },
    })
}

/// Reads a canonical archive CSV. The header must match [`COLUMNS`]
/// exactly and every row must carry a supported schema major version.
pub fn read_archive_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::schema(path, "file is empty; expected a header row"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    for (idx, expected) in COLUMNS.iter().enumerate() {
        match headers.get(idx) {
            Some(h) if h.trim_start_matches('\u{feff}') == *expected => {}
            Some(h) => {
                return Err(Error::schema(
                    path,
                    format!("line 1, column {}: expected `{expected}`, found `{h}`", idx + 1),
                ))
            }
            None => {
                return Err(Error::schema(path, format!("line 1: missing column `{expected}`")))
            }
        }
    }
    if headers.len() > COLUMNS.len() {
        return Err(Error::schema(
            path,
            format!("line 1: unexpected column `{}`", &headers[COLUMNS.len()]),
        ));
    }
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = Row {
            path,
            line,
            record: &record,
        };
        let version = row.get("schema_version").trim();
        let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
        if major != Some(SCHEMA_MAJOR) {
            return Err(row.err("schema_version", format!("unsupported schema version `{version}`")));
        }
        let strategy: Strategy = row
            .get("strategy")
            .parse()
            .map_err(|e| row.err("strategy", e))?;
        let rep: u32 = row
            .get("rep")
            .trim()
            .parse()
            .map_err(|_| row.err("rep", format!("expected a positive integer, found `{}`", row.get("rep"))))?;
        let outcome = outcome_from_row(&row, strategy)?;
        out.push(TrialRecord::new(
            TrialKey {
                model: row.get("model").to_string(),
                provider: row.get("provider").to_string(),
                stimulus: row.get("phenomenon").to_string(),
                category: row.get("category").to_string(),
                strategy,
                rep,
            },
            outcome,
            row.get("raw_text"),
        ));
    }
    if out.is_empty() {
        return Err(Error::schema(path, "no data rows after the header"));
    }
    Ok(out)
}

/// Writes records as a JSON array, one object per evaluation.
pub fn save_documents(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a JSON array written by [`save_documents`]. Derived fields are
/// recomputed from each outcome.
pub fn read_documents(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::schema(path, "file is empty"));
    }
    let records: Vec<TrialRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::schema(path, format!("line {}, column {}: {e}", e.line(), e.column())))?;
    if records.is_empty() {
        return Err(Error::schema(path, "document array is empty"));
    }
    Ok(records
        .into_iter()
        .map(|r| {
            TrialRecord::new(
                TrialKey {
                    model: r.model,
                    provider: r.provider,
                    stimulus: r.stimulus,
                    category: r.category,
                    strategy: r.strategy,
                    rep: r.rep,
                },
                r.outcome,
                r.raw_text,
            )
        })
        .collect())
}
