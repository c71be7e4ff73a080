//! Archive schemas, import of external result files, and the analysis
//! report rendered as CSV tables.

mod analysis;
mod archive;
mod import;
mod table;

use std::path::Path;

pub use analysis::{
    analyze, build_table, focus_model, severity_pairs, AnalysisOptions, AnalysisReport, Dataset,
    TABLE_NAMES,
};
pub use archive::{
    archive_row, losses_to_json, read_archive_csv, read_documents, save_archive_csv,
    save_documents, write_archive_csv, COLUMNS, SCHEMA_MAJOR, SCHEMA_VERSION, STATUS_VALID,
};
pub use import::{import_file, resolve_stimulus, ColumnMap, ImportMapping};
pub use table::{Cell, Table};

use crate::error::Result;
use crate::protocol::Strategy;
use crate::record::TrialRecord;

/// Loads one input file: through `mapping` when given, otherwise as a
/// canonical archive CSV or, for `.json`, a record-per-evaluation document.
pub fn load_records(
    path: &Path,
    mapping: Option<&ImportMapping>,
    default_strategy: Option<Strategy>,
) -> Result<Vec<TrialRecord>> {
    if let Some(m) = mapping {
        return import_file(path, m, default_strategy);
    }
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        read_documents(path)
    } else {
        read_archive_csv(path)
    }
}
