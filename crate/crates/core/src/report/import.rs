//! Import of externally produced result files through a column mapping.
//!
//! The mapping names which source column (CSV) or field path (JSON,
//! dot-separated) holds each canonical field, and how source values map
//! onto strategy codes and stimulus ids. Nothing is inferred from column
//! names.

use serde::Deserialize;
use serde_json::Value;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::parser::{parse_trial, FailureKind, ParseOutcome, S2_SUM_TOLERANCE};
use crate::protocol::{find_stimulus, stimulus_registry, Strategy};
use crate::record::{TrialKey, TrialRecord};
use crate::tif::{BinaryEstimate, LossDeclaration, ScalarTif, TensorEvaluation};

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub model: Option<String>,
    pub provider: Option<String>,
    pub phenomenon: Option<String>,
    pub category: Option<String>,
    pub strategy: Option<String>,
    pub rep: Option<String>,
    #[serde(rename = "T")]
    pub t: Option<String>,
    #[serde(rename = "I")]
    pub i: Option<String>,
    #[serde(rename = "F")]
    pub f: Option<String>,
    pub p_yes: Option<String>,
    pub p_no: Option<String>,
    pub losses: Option<String>,
    pub raw_text: Option<String>,
    pub parse_status: Option<String>,
}

fn default_rep_base() -> u32 {
    1
}

/// Column mapping document, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportMapping {
    #[serde(default)]
    pub columns: ColumnMap,
    /// Field paths for JSON documents; `columns` is used when absent.
    #[serde(default)]
    pub json_columns: Option<ColumnMap>,
    /// Key of the record array when a JSON document is an object.
    #[serde(default)]
    pub records_key: Option<String>,
    /// Repetition number of the first rep in the source.
    #[serde(default = "default_rep_base")]
    pub rep_base: u32,
    #[serde(default)]
    pub strategy_values: BTreeMap<String, Strategy>,
    #[serde(default)]
    pub phenomenon_values: BTreeMap<String, String>,
    #[serde(default)]
    pub model_values: BTreeMap<String, String>,
    /// `parse_status` values that mark a row as a failed parse.
    #[serde(default)]
    pub failure_values: Vec<String>,
}

impl Default for ImportMapping {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            json_columns: None,
            records_key: None,
            rep_base: 1,
            strategy_values: BTreeMap::new(),
            phenomenon_values: BTreeMap::new(),
            model_values: BTreeMap::new(),
            failure_values: Vec::new(),
        }
    }
}

impl ImportMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("import mapping: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Resolves a source phenomenon value to a stimulus id: explicit mapping
/// first, then id, category or statement text, ignoring case.
pub fn resolve_stimulus(value: &str, mapping: &ImportMapping) -> Option<String> {
    if let Some(id) = mapping.phenomenon_values.get(value) {
        return find_stimulus(id).map(|s| s.id);
    }
    let v = value.trim().to_lowercase();
    let unquoted = v.trim_matches('"');
    stimulus_registry()
        .into_iter()
        .find(|s| {
            s.id == v || s.category.to_lowercase() == v || s.statement.to_lowercase() == unquoted
        })
        .map(|s| s.id)
}

trait Source {
    fn field(&self, name: &str) -> Option<Value>;
}

struct CsvSource<'a> {
    index: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl Source for CsvSource<'_> {
    fn field(&self, name: &str) -> Option<Value> {
        let idx = *self.index.get(name)?;
        self.record.get(idx).map(|s| Value::String(s.to_string()))
    }
}

impl Source for Value {
    fn field(&self, name: &str) -> Option<Value> {
        name.split('.')
            .try_fold(self, |v, seg| v.get(seg))
            .cloned()
    }
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) if s.trim().is_empty() => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

struct RowCtx<'a> {
    path: &'a Path,
    line: usize,
    columns: &'a ColumnMap,
    mapping: &'a ImportMapping,
    source: &'a dyn Source,
}

impl RowCtx<'_> {
    fn err(&self, column: &str, message: impl std::fmt::Display) -> Error {
        Error::schema(
            self.path,
            format!("line {}, column `{column}`: {message}", self.line),
        )
    }

    fn raw(&self, col: &Option<String>) -> Option<(String, Value)> {
        let name = col.as_ref()?;
        let v = self.source.field(name)?;
        Some((name.clone(), v))
    }

    fn text(&self, col: &Option<String>) -> Option<String> {
        self.raw(col).and_then(|(_, v)| as_text(&v))
    }

    fn required(&self, col: &Option<String>, field: &str) -> Result<String> {
        let name = col.as_ref().ok_or_else(|| {
            Error::schema(self.path, format!("mapping has no column for `{field}`"))
        })?;
        self.text(col)
            .ok_or_else(|| self.err(name, format!("missing value for `{field}`")))
    }

    fn real(&self, col: &Option<String>) -> Result<Option<f64>> {
        let Some((name, v)) = self.raw(col) else {
            return Ok(None);
        };
        match &v {
            Value::Number(n) => Ok(n.as_f64()),
            other => match as_text(other) {
                None => Ok(None),
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| self.err(&name, format!("expected a number, found `{s}`"))),
            },
        }
    }
}

fn losses_from_value(v: &Value) -> Option<std::result::Result<Vec<LossDeclaration>, String>> {
    let parsed = match v {
        Value::Array(_) => v.clone(),
        Value::String(s) if !s.trim().is_empty() => match serde_json::from_str(s) {
            Ok(val) => val,
            Err(e) => return Some(Err(e.to_string())),
        },
        _ => return None,
    };
    let items: Vec<LossDeclaration> = match serde_json::from_value(parsed) {
        Ok(items) => items,
        Err(e) => return Some(Err(e.to_string())),
    };
    Some(
        items
            .into_iter()
            .map(|l| LossDeclaration::new(l.what, l.why, l.severity).map_err(|e| e.to_string()))
            .collect(),
    )
}

fn out_of_range(detail: impl std::fmt::Display) -> ParseOutcome {
    ParseOutcome::Failure {
        failure: FailureKind::OutOfRange,
        detail: detail.to_string(),
    }
}

fn build_outcome(ctx: &RowCtx<'_>, strategy: Strategy, raw: &str, failed: bool) -> Result<ParseOutcome> {
    if strategy == Strategy::Ablation {
        return Ok(parse_trial(raw, strategy));
    }
    if failed {
        return Ok(match parse_trial(raw, strategy) {
            f @ ParseOutcome::Failure { .. } => f,
            _ => ParseOutcome::Failure {
                failure: FailureKind::Garbled,
                detail: "marked as failed in source".into(),
            },
        });
    }
    let c = ctx.columns;
    if strategy == Strategy::EntropyDerived {
        return Ok(match (ctx.real(&c.p_yes)?, ctx.real(&c.p_no)?) {
            (Some(y), Some(n)) => match BinaryEstimate::new(y, n) {
                Ok(estimate) => ParseOutcome::ValidBinary { estimate },
                Err(e) => ParseOutcome::Failure {
                    failure: FailureKind::ConstraintViolated,
                    detail: e.to_string(),
                },
            },
            _ => parse_trial(raw, strategy),
        });
    }
    let (t, i, f) = match (ctx.real(&c.t)?, ctx.real(&c.i)?, ctx.real(&c.f)?) {
        (Some(t), Some(i), Some(f)) => (t, i, f),
        _ => return Ok(parse_trial(raw, strategy)),
    };
    let scalar = match ScalarTif::new(t, i, f) {
        Ok(s) => s,
        Err(e) => return Ok(out_of_range(e)),
    };
    Ok(match strategy {
        Strategy::Neutrosophic => ParseOutcome::ValidScalar {
            scalar,
            constraint_flagged: false,
        },
        Strategy::Probabilistic => ParseOutcome::ValidScalar {
            scalar,
            constraint_flagged: (scalar.sum() - 1.0).abs() > S2_SUM_TOLERANCE,
        },
        _ => {
            let from_column = ctx.raw(&c.losses).and_then(|(_, v)| losses_from_value(&v));
            let losses = match from_column {
                Some(Ok(losses)) if !losses.is_empty() => losses,
                _ => match parse_trial(raw, strategy) {
                    ParseOutcome::ValidTensor { tensor } => tensor.losses,
                    other => return Ok(other),
                },
            };
            ParseOutcome::ValidTensor {
                tensor: TensorEvaluation { scalar, losses },
            }
        }
    })
}

struct RepCounter(BTreeMap<(String, String, Strategy), u32>);

fn import_row(
    ctx: &RowCtx<'_>,
    default_strategy: Option<Strategy>,
    counter: &mut RepCounter,
) -> Result<TrialRecord> {
    let c = ctx.columns;
    let mut model = ctx.required(&c.model, "model")?;
    if let Some(renamed) = ctx.mapping.model_values.get(&model) {
        model = renamed.clone();
    }
    let phen_col = c.phenomenon.clone().unwrap_or_else(|| "phenomenon".into());
    let phen = ctx.required(&c.phenomenon, "phenomenon")?;
    let stimulus = resolve_stimulus(&phen, ctx.mapping)
        .ok_or_else(|| ctx.err(&phen_col, format!("unknown phenomenon `{phen}`")))?;
    let category = ctx
        .text(&c.category)
        .or_else(|| find_stimulus(&stimulus).map(|s| s.category))
        .unwrap_or_default();
    let strategy = match ctx.text(&c.strategy) {
        Some(v) => match ctx.mapping.strategy_values.get(&v) {
            Some(s) => *s,
            None => v.parse().map_err(|e| ctx.err(c.strategy.as_deref().unwrap_or(""), e))?,
        },
        None => default_strategy.ok_or_else(|| {
            Error::schema(ctx.path, format!("line {}: no strategy column or default", ctx.line))
        })?,
    };
    let cell = (model.clone(), stimulus.clone(), strategy);
    let rep = match ctx.real(&c.rep)? {
        Some(v) if v.fract() == 0.0 && v >= ctx.mapping.rep_base as f64 => {
            (v as u32) - ctx.mapping.rep_base + 1
        }
        Some(v) => {
            return Err(ctx.err(c.rep.as_deref().unwrap_or("rep"), format!("invalid repetition `{v}`")))
        }
        None => {
            let n = counter.0.entry(cell).or_default();
            *n += 1;
            *n
        }
    };
    let raw = ctx.text(&c.raw_text).unwrap_or_default();
    let failed = ctx
        .text(&c.parse_status)
        .is_some_and(|s| ctx.mapping.failure_values.iter().any(|f| f.eq_ignore_ascii_case(s.trim())));
    let outcome = build_outcome(ctx, strategy, &raw, failed)?;
    Ok(TrialRecord::new(
        TrialKey {
            model,
            provider: ctx.text(&c.provider).unwrap_or_default(),
            stimulus,
            category,
            strategy,
            rep,
        },
        outcome,
        raw,
    ))
}

/// Imports a CSV or JSON (by `.json` extension) result file.
///
/// `default_strategy` applies to rows whose strategy is not mapped.
pub fn import_file(
    path: &Path,
    mapping: &ImportMapping,
    default_strategy: Option<Strategy>,
) -> Result<Vec<TrialRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::schema(path, "file is empty"));
    }
    let mut counter = RepCounter(BTreeMap::new());
    let mut out = Vec::new();
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let doc: Value = serde_json::from_slice(&bytes)
            .map_err(|e| Error::schema(path, format!("line {}: {e}", e.line())))?;
        let items = match (&doc, &mapping.records_key) {
            (Value::Array(items), _) => items.clone(),
            (Value::Object(_), Some(key)) => doc
                .get(key)
                .and_then(|v| v.as_array())
                .cloned()
                .ok_or_else(|| Error::schema(path, format!("no array under `{key}`")))?,
            _ => return Err(Error::schema(path, "expected a JSON array of records")),
        };
        let columns = mapping.json_columns.as_ref().unwrap_or(&mapping.columns);
        for (idx, item) in items.iter().enumerate() {
            let ctx = RowCtx {
                path,
                line: idx + 1,
                columns,
                mapping,
                source: item,
            };
            out.push(import_row(&ctx, default_strategy, &mut counter)?);
        }
    } else {
        let mut reader = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
        let index: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for name in [&mapping.columns.model, &mapping.columns.phenomenon]
            .into_iter()
            .flatten()
        {
            if !index.contains_key(name) {
                return Err(Error::schema(path, format!("line 1: missing column `{name}`")));
            }
        }
        for result in reader.records() {
            let record = result?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let source = CsvSource {
                index: &index,
                record: &record,
            };
            let ctx = RowCtx {
                path,
                line,
                columns: &mapping.columns,
                mapping,
                source: &source,
            };
            out.push(import_row(&ctx, default_strategy, &mut counter)?);
        }
    }
    if out.is_empty() {
        return Err(Error::schema(path, "no records"));
    }
    Ok(out)
}
