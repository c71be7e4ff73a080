use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::table::{Cell, Table};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_cells, ablation_overlap, coefficient_of_variation, convergence_permutation_test,
    correlate, cross_stimulus_loss_overlap, hyper_truth_rate, manhattan_distance, mean,
    mean_triple, pairwise_jaccard_matrix, pooled_vocabulary, severity_profile,
    tautology_comparison, theme_convergence, variance_compression, jaccard, ConvergenceMode,
    PermutationConfig, Residualization, ThemeLexicon, TokenizerOptions, DEFAULT_PERMUTATIONS,
};
use crate::protocol::{find_stimulus, registry_order, StimulusSet, Strategy};
use crate::record::TrialRecord;
use crate::tif::{classify_position, EpistemicPosition, DEFAULT_POSITION_TOLERANCE};

/// Every record set the analysis battery reads.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// S1, S2 and S3 records.
    pub s1s3: Vec<TrialRecord>,
    /// S4 records on the original stimuli.
    pub s4: Vec<TrialRecord>,
    /// S4 rerun records; they replace the S4 rows of every model they cover.
    pub s4_rerun: Vec<TrialRecord>,
    /// S4 records on the tautology controls.
    pub tautology: Vec<TrialRecord>,
    /// S5 records.
    pub ablation: Vec<TrialRecord>,
}

fn is_tautology(stimulus: &str) -> bool {
    find_stimulus(stimulus).is_some_and(|s| s.set == StimulusSet::Tautology)
}

impl Dataset {
    /// Sorts a mixed record list into its sets by strategy and stimulus.
    pub fn from_records(records: impl IntoIterator<Item = TrialRecord>) -> Self {
        let mut d = Self::default();
        d.extend(records);
        d
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = TrialRecord>) {
        for r in records {
            match r.strategy {
                Strategy::Ablation => self.ablation.push(r),
                Strategy::TensorLosses if is_tautology(&r.stimulus) => self.tautology.push(r),
                Strategy::TensorLosses => self.s4.push(r),
                _ => self.s1s3.push(r),
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.s1s3.is_empty()
            && self.s4.is_empty()
            && self.s4_rerun.is_empty()
            && self.tautology.is_empty()
            && self.ablation.is_empty()
    }

    /// S4 records with rerun models substituted.
    pub fn tensor(&self) -> Vec<TrialRecord> {
        let rerun: BTreeSet<&str> = self.s4_rerun.iter().map(|r| r.model.as_str()).collect();
        self.s4
            .iter()
            .filter(|r| !rerun.contains(r.model.as_str()))
            .chain(&self.s4_rerun)
            .filter(|r| !is_tautology(&r.stimulus))
            .cloned()
            .collect()
    }

    /// Every record, for cell aggregates.
    pub fn all(&self) -> Vec<TrialRecord> {
        let mut out = self.s1s3.clone();
        out.extend(self.tensor());
        out.extend(self.tautology.iter().cloned());
        out.extend(self.ablation.iter().cloned());
        out
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub tokenizer: TokenizerOptions,
    pub lexicon: ThemeLexicon,
    pub convergence_mode: ConvergenceMode,
    pub permutations: usize,
    pub seed: u64,
    /// Case-insensitive substring picking the model for the pairwise matrix
    /// and severity table.
    pub focus_model: String,
    pub position_tolerance: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerOptions::default(),
            lexicon: ThemeLexicon::default_lexicon(),
            convergence_mode: ConvergenceMode::AnyRep,
            permutations: DEFAULT_PERMUTATIONS,
            seed: PermutationConfig::default().seed,
            focus_model: "mistral".into(),
            position_tolerance: DEFAULT_POSITION_TOLERANCE,
        }
    }
}

pub const TABLE_NAMES: [&str; 19] = [
    "s2_constraint",
    "s1_model_table",
    "phenomenon_sums",
    "position_table",
    "paradox_s1_reps",
    "cell_aggregates",
    "scalar_vs_jaccard",
    "mistral_matrix",
    "severity_table",
    "correlation_table",
    "convergence_summary",
    "loss_uniqueness",
    "tautology_table",
    "ablation_table",
    "ablation_extras",
    "variance_compression_table",
    "fig1_paradox_positions",
    "fig2_scalar_vs_jaccard",
    "fig3_mistral_matrix",
];

/// Report tables, in [`TABLE_NAMES`] order, plus warnings about tables
/// that could not be built.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("neutrotensor analysis report\n");
        for t in self.tables.iter().filter(|t| !t.name.starts_with("fig") && t.name != "cell_aggregates") {
            out.push_str(&format!("\n== {} ==\n", t.name));
            out.push_str(&t.to_text());
        }
        if !self.warnings.is_empty() {
            out.push_str("\n== warnings ==\n");
            for w in &self.warnings {
                out.push_str(w);
                out.push('\n');
            }
        }
        out
    }

    /// Writes `<name>.csv` per table plus `summary.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv_string()?).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("summary.txt");
        std::fs::write(&path, self.summary()).map_err(|e| Error::io(&path, e))
    }
}

/// Builds every table the data supports. Tables whose inputs are missing
/// are left out and explained in the warnings.
pub fn analyze(dataset: &Dataset, options: &AnalysisOptions) -> AnalysisReport {
    let built: Vec<(Result<Table>, Vec<String>)> = TABLE_NAMES
        .par_iter()
        .map(|name| {
            let mut warnings = Vec::new();
            let table = build_table_with_warnings(name, dataset, options, &mut warnings);
            (table, warnings)
        })
        .collect();
    let mut report = AnalysisReport {
        tables: Vec::new(),
        warnings: Vec::new(),
    };
    for ((table, warnings), name) in built.into_iter().zip(TABLE_NAMES) {
        report.warnings.extend(warnings);
        match table {
            Ok(t) => report.tables.push(t),
            Err(e) => report.warnings.push(format!("{name}: skipped: {e}")),
        }
    }
    report
}

/// One named table.
pub fn build_table(name: &str, dataset: &Dataset, options: &AnalysisOptions) -> Result<Table> {
    build_table_with_warnings(name, dataset, options, &mut Vec::new())
}

fn build_table_with_warnings(
    name: &str,
    d: &Dataset,
    o: &AnalysisOptions,
    warnings: &mut Vec<String>,
) -> Result<Table> {
    match name {
        "s2_constraint" => s2_constraint(d),
        "s1_model_table" => s1_model_table(d),
        "phenomenon_sums" => phenomenon_sums(d),
        "position_table" => position_table(d, o),
        "paradox_s1_reps" => paradox_s1_reps(d, o),
        "cell_aggregates" => cell_aggregates(d),
        "scalar_vs_jaccard" => scalar_vs_jaccard(d, o),
        "mistral_matrix" => focus_matrix(d, o, warnings, "mistral_matrix"),
        "severity_table" => severity_table(d, o),
        "correlation_table" => correlation_table(d, warnings),
        "convergence_summary" => convergence_summary(d, o),
        "loss_uniqueness" => loss_uniqueness(d),
        "tautology_table" => tautology_table(d),
        "ablation_table" => ablation_table(d, o),
        "ablation_extras" => ablation_extras(d, o),
        "variance_compression_table" => variance_table(d, warnings),
        "fig1_paradox_positions" => paradox_s1_reps(d, o).map(|t| project(t, "fig1_paradox_positions", &["model", "rep", "T", "I", "F", "position"])),
        "fig2_scalar_vs_jaccard" => scalar_vs_jaccard(d, o).map(|t| project(t, "fig2_scalar_vs_jaccard", &["model", "manhattan", "jaccard"])),
        "fig3_mistral_matrix" => focus_matrix(d, o, &mut Vec::new(), "fig3_mistral_matrix"),
        _ => Err(Error::Domain(format!(
            "unknown table `{name}`; expected one of {}",
            TABLE_NAMES.join(", ")
        ))),
    }
}

fn project(t: Table, name: &str, columns: &[&str]) -> Table {
    let idx: Vec<usize> = columns.iter().map(|c| t.column(c).expect("projected column")).collect();
    let mut out = Table::new(name, columns);
    for row in &t.rows {
        out.push(idx.iter().map(|&i| row[i].clone()).collect());
    }
    out
}

fn by_model<'a, I>(records: I) -> BTreeMap<&'a str, Vec<&'a TrialRecord>>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut out: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.model.as_str()).or_default().push(r);
    }
    out
}

/// Stimulus ids present in `records`, in registry order.
fn stimuli_of<'a, I>(records: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let set: BTreeSet<&str> = records.into_iter().map(|r| r.stimulus.as_str()).collect();
    let mut out: Vec<String> = set.into_iter().map(str::to_string).collect();
    out.sort_by_key(|s| (registry_order(s), s.clone()));
    out
}

fn of_strategy(d: &Dataset, strategy: Strategy) -> Vec<&TrialRecord> {
    d.s1s3.iter().filter(|r| r.strategy == strategy).collect()
}

fn nonempty<T>(v: Vec<T>, what: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        Err(Error::Empty(what.to_string()))
    } else {
        Ok(v)
    }
}

fn s2_constraint(d: &Dataset) -> Result<Table> {
    let rows = nonempty(of_strategy(d, Strategy::Probabilistic), "no S2 records")?;
    let mut t = Table::new(
        "s2_constraint",
        &["model", "valid_reps", "total_reps", "hyper_truth", "max_abs_sum_error", "mean_sum", "flagged"],
    );
    let mut push = |label: &str, rs: &[&TrialRecord]| {
        let sums: Vec<f64> = rs.iter().filter_map(|r| r.sum).collect();
        let flagged = rs
            .iter()
            .filter(|r| matches!(r.outcome, crate::ParseOutcome::ValidScalar { constraint_flagged: true, .. }))
            .count();
        t.push(vec![
            Cell::text(label),
            Cell::int(sums.len()),
            Cell::int(rs.len()),
            Cell::int(rs.iter().filter(|r| r.hyper_truth == Some(true)).count()),
            Cell::opt(sums.iter().map(|s| (s - 1.0).abs()).reduce(f64::max)),
            Cell::opt(mean(&sums)),
            Cell::int(flagged),
        ]);
    };
    for (model, rs) in by_model(rows.iter().copied()) {
        push(model, &rs);
    }
    push("ALL", &rows);
    Ok(t)
}

fn s1_model_table(d: &Dataset) -> Result<Table> {
    let rows = nonempty(of_strategy(d, Strategy::Neutrosophic), "no S1 records")?;
    let mut t = Table::new(
        "s1_model_table",
        &["model", "hyper_truth", "valid_reps", "total_reps", "hyper_pct", "mean_sum", "cv_sum"],
    );
    let mut push = |label: &str, rs: &[&TrialRecord]| -> Result<()> {
        let rate = hyper_truth_rate(rs.iter().copied(), |_| true)?;
        let sums: Vec<f64> = rs.iter().filter_map(|r| r.sum).collect();
        t.push(vec![
            Cell::text(label),
            Cell::int(rate.numerator),
            Cell::int(rate.denominator),
            Cell::int(rs.len()),
            Cell::Real(rate.fraction * 100.0),
            Cell::opt(mean(&sums)),
            Cell::opt(coefficient_of_variation(&sums).ok()),
        ]);
        Ok(())
    };
    for (model, rs) in by_model(rows.iter().copied()) {
        push(model, &rs)?;
    }
    push("ALL", &rows)?;
    Ok(t)
}

fn phenomenon_sums(d: &Dataset) -> Result<Table> {
    let rows = nonempty(of_strategy(d, Strategy::Neutrosophic), "no S1 records")?;
    let mut t = Table::new(
        "phenomenon_sums",
        &["phenomenon", "category", "hyper_truth", "valid_reps", "hyper_pct", "mean_sum"],
    );
    for s in stimuli_of(rows.iter().copied()) {
        let rs: Vec<&TrialRecord> = rows.iter().copied().filter(|r| r.stimulus == s).collect();
        let sums: Vec<f64> = rs.iter().filter_map(|r| r.sum).collect();
        let Ok(rate) = hyper_truth_rate(rs.iter().copied(), |_| true) else {
            continue;
        };
        t.push(vec![
            Cell::text(&s),
            Cell::text(rs[0].category.clone()),
            Cell::int(rate.numerator),
            Cell::int(rate.denominator),
            Cell::Real(rate.fraction * 100.0),
            Cell::opt(mean(&sums)),
        ]);
    }
    Ok(t)
}

const POSITIONS: [EpistemicPosition; 4] = [
    EpistemicPosition::Saturation,
    EpistemicPosition::BalancedConflict,
    EpistemicPosition::Absorption,
    EpistemicPosition::Other,
];

fn position_table(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let rows = nonempty(of_strategy(d, Strategy::Neutrosophic), "no S1 records")?;
    let mut t = Table::new(
        "position_table",
        &["model", "phenomenon", "valid_reps", "saturation", "balanced_conflict", "absorption", "other", "modal_position"],
    );
    let stimuli = stimuli_of(rows.iter().copied());
    for (model, rs) in by_model(rows.iter().copied()) {
        for s in &stimuli {
            let mut counts = [0usize; 4];
            for r in rs.iter().filter(|r| &r.stimulus == s) {
                if let Some(sc) = r.scalar() {
                    let p = classify_position(&sc, o.position_tolerance)?;
                    counts[POSITIONS.iter().position(|x| *x == p).expect("known position")] += 1;
                }
            }
            let valid: usize = counts.iter().sum();
            if valid == 0 {
                continue;
            }
            // first maximum in declaration order
            let modal = (0..4).fold(0, |best, k| if counts[k] > counts[best] { k } else { best });
            let mut row = vec![Cell::text(model), Cell::text(s), Cell::int(valid)];
            row.extend(counts.iter().map(|&c| Cell::int(c)));
            row.push(Cell::text(POSITIONS[modal].as_str()));
            t.push(row);
        }
    }
    Ok(t)
}

fn paradox_s1_reps(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let mut rows: Vec<&TrialRecord> = of_strategy(d, Strategy::Neutrosophic)
        .into_iter()
        .filter(|r| r.stimulus == "paradox" && r.scalar().is_some())
        .collect();
    rows = nonempty(rows, "no valid S1 paradox records")?;
    rows.sort_by(|a, b| (&a.model, a.rep).cmp(&(&b.model, b.rep)));
    let mut t = Table::new("paradox_s1_reps", &["model", "rep", "T", "I", "F", "sum", "position"]);
    for r in rows {
        let s = r.scalar().expect("filtered");
        t.push(vec![
            Cell::text(r.model.clone()),
            Cell::int(r.rep as usize),
            Cell::Real(s.t()),
            Cell::Real(s.i()),
            Cell::Real(s.f()),
            Cell::Real(s.sum()),
            Cell::text(classify_position(&s, o.position_tolerance)?.as_str()),
        ]);
    }
    Ok(t)
}

fn cell_aggregates(d: &Dataset) -> Result<Table> {
    let aggs = nonempty(aggregate_cells(&d.all()), "no valid scalar records")?;
    let mut t = Table::new(
        "cell_aggregates",
        &[
            "model", "stimulus", "strategy", "valid_reps", "total_reps", "mean_T", "mean_I", "mean_F",
            "mean_sum", "hyper_fraction", "modal_T", "modal_I", "modal_F", "modal_count",
        ],
    );
    for a in aggs {
        t.push(vec![
            Cell::text(a.model),
            Cell::text(a.stimulus),
            Cell::text(a.strategy.code()),
            Cell::int(a.valid_reps),
            Cell::int(a.total_reps),
            Cell::Real(a.mean_t),
            Cell::Real(a.mean_i),
            Cell::Real(a.mean_f),
            Cell::Real(a.mean_sum),
            Cell::Real(a.hyper_truth_fraction),
            Cell::Real(a.modal.t()),
            Cell::Real(a.modal.i()),
            Cell::Real(a.modal.f()),
            Cell::int(a.modal_count),
        ]);
    }
    Ok(t)
}

fn scalar_vs_jaccard(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let mut t = Table::new(
        "scalar_vs_jaccard",
        &["model", "paradox_reps", "ignorance_reps", "manhattan", "jaccard"],
    );
    for (model, rs) in by_model(&tensor) {
        let valid = |s: &str| -> Vec<&TrialRecord> {
            rs.iter().copied().filter(|r| r.stimulus == s && r.outcome.tensor().is_some()).collect()
        };
        let (p, i) = (valid("paradox"), valid("ignorance"));
        let (Some(mp), Some(mi)) = (mean_triple(p.iter().copied()), mean_triple(i.iter().copied())) else {
            continue;
        };
        let vp = pooled_vocabulary(p.iter().copied(), o.tokenizer);
        let vi = pooled_vocabulary(i.iter().copied(), o.tokenizer);
        t.push(vec![
            Cell::text(model),
            Cell::int(p.len()),
            Cell::int(i.len()),
            Cell::Real(manhattan_distance(mp, mi)),
            Cell::Real(jaccard(&vp, &vi)),
        ]);
    }
    nonempty(t.rows.clone(), "no model has valid S4 paradox and ignorance records")?;
    Ok(t)
}

/// The model whose name contains the focus pattern.
pub fn focus_model(records: &[TrialRecord], pattern: &str) -> Result<String> {
    let needle = pattern.to_lowercase();
    let models: BTreeSet<&str> = records
        .iter()
        .map(|r| r.model.as_str())
        .filter(|m| m.to_lowercase().contains(&needle))
        .collect();
    match models.len() {
        1 => Ok(models.into_iter().next().expect("one").to_string()),
        0 => Err(Error::Empty(format!("no model name contains `{pattern}`"))),
        _ => Err(Error::Domain(format!(
            "focus pattern `{pattern}` matches several models: {}",
            models.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn focus_matrix(d: &Dataset, o: &AnalysisOptions, warnings: &mut Vec<String>, name: &str) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let model = focus_model(&tensor, &o.focus_model)?;
    let phenomena = stimuli_of(&tensor);
    let (m, warn) = pairwise_jaccard_matrix(&model, &tensor, &phenomena, o.tokenizer);
    warnings.extend(warn);
    let mut cols = vec!["model", "phenomenon", "valid_reps"];
    cols.extend(m.phenomena.iter().map(String::as_str));
    let mut t = Table::new(name, &cols);
    for (i, p) in m.phenomena.iter().enumerate() {
        let valid = tensor
            .iter()
            .filter(|r| r.model == model && &r.stimulus == p && r.outcome.tensor().is_some())
            .count();
        let mut row = vec![Cell::text(&model), Cell::text(p), Cell::int(valid)];
        row.extend(m.values[i].iter().map(|&v| Cell::Real(v)));
        t.push(row);
    }
    Ok(t)
}

fn severity_table(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let model = focus_model(&tensor, &o.focus_model)?;
    let mut t = Table::new(
        "severity_table",
        &["model", "phenomenon", "valid_reps", "total_losses", "mean_severity", "losses_per_rep"],
    );
    for p in stimuli_of(&tensor) {
        let rs = tensor.iter().filter(|r| r.model == model && r.stimulus == p);
        let Ok(prof) = severity_profile(&p, rs) else {
            continue;
        };
        t.push(vec![
            Cell::text(&model),
            Cell::text(p),
            Cell::int(prof.valid_reps),
            Cell::int(prof.total_losses),
            Cell::Real(prof.mean_severity),
            Cell::Real(prof.losses_per_rep),
        ]);
    }
    Ok(t)
}

/// `(max severity, mean severity, I, stimulus, model)` per valid tensor record.
pub fn severity_pairs(records: &[TrialRecord]) -> Vec<(f64, f64, f64, String, String)> {
    records
        .iter()
        .filter_map(|r| {
            let t = r.outcome.tensor()?;
            Some((
                t.max_severity()?,
                t.mean_severity()?,
                t.scalar.i(),
                r.stimulus.clone(),
                r.model.clone(),
            ))
        })
        .collect()
}

fn correlation_table(d: &Dataset, warnings: &mut Vec<String>) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let mut t = Table::new(
        "correlation_table",
        &["scope", "severity", "mode", "n", "pearson_r", "pearson_p", "spearman_rho", "spearman_p"],
    );
    let mut push = |scope: &str, which: &str, pairs: &[(f64, f64, f64, String, String)], all_modes: bool| {
        let xs: Vec<f64> = pairs.iter().map(|p| if which == "max" { p.0 } else { p.1 }).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let stim: Vec<String> = pairs.iter().map(|p| p.3.clone()).collect();
        let model: Vec<String> = pairs.iter().map(|p| p.4.clone()).collect();
        let mut modes = vec![Residualization::None];
        if all_modes {
            modes.push(Residualization::ByStimulus(&stim));
            modes.push(Residualization::ByStimulusThenModel {
                stimulus: &stim,
                model: &model,
            });
        }
        for mode in modes {
            let mut row = vec![
                Cell::text(scope),
                Cell::text(which),
                Cell::text(mode.mode().as_str()),
                Cell::int(xs.len()),
            ];
            match correlate(&xs, &ys, mode) {
                Ok(c) => row.extend([
                    Cell::Real(c.pearson_r),
                    Cell::Real(c.pearson_p),
                    Cell::Real(c.spearman_rho),
                    Cell::Real(c.spearman_p),
                ]),
                Err(e) => {
                    warnings.push(format!("correlation_table: {scope}/{which}/{}: {e}", mode.mode().as_str()));
                    row.extend(std::iter::repeat_n(Cell::Empty, 4));
                }
            }
            t.push(row);
        }
    };
    let pairs = severity_pairs(&tensor);
    for which in ["max", "mean"] {
        push("all", which, &pairs, true);
    }
    for (model, _) in by_model(&tensor) {
        let mine: Vec<_> = pairs.iter().filter(|p| p.4 == model).cloned().collect();
        push(model, "max", &mine, false);
    }
    Ok(t)
}

fn convergence_summary(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let summary = theme_convergence(&tensor, &o.lexicon, o.convergence_mode)?;
    let test = if o.permutations > 0 {
        Some(convergence_permutation_test(
            &tensor,
            &o.lexicon,
            o.convergence_mode,
            PermutationConfig {
                permutations: o.permutations,
                seed: o.seed,
            },
        )?)
    } else {
        None
    };
    let mode = match o.convergence_mode {
        ConvergenceMode::AnyRep => "any_rep",
        ConvergenceMode::EveryRep => "every_rep",
    };
    let mut t = Table::new(
        "convergence_summary",
        &["scope", "models", "universal_count", "universal_themes", "mean_pairwise_jaccard", "permutation_p", "permutations", "seed", "mode"],
    );
    let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(";");
    t.push(vec![
        Cell::text("all"),
        Cell::int(summary.models.len()),
        Cell::int(summary.universal_count),
        Cell::text(join(&summary.universal_themes)),
        Cell::Real(summary.mean_pairwise_jaccard),
        Cell::opt(test.map(|x| x.p_value)),
        Cell::int(o.permutations),
        Cell::text(o.seed.to_string()),
        Cell::text(mode),
    ]);
    for s in &summary.per_stimulus {
        t.push(vec![
            Cell::text(&s.stimulus),
            Cell::int(s.models),
            Cell::int(s.universal.len()),
            Cell::text(join(&s.universal)),
            Cell::Real(s.mean_pairwise_jaccard),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::text(mode),
        ]);
    }
    Ok(t)
}

fn loss_uniqueness(d: &Dataset) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    let o = cross_stimulus_loss_overlap(&tensor);
    let mut t = Table::new("loss_uniqueness", &["metric", "stimulus_a", "stimulus_b", "value"]);
    t.push(vec![Cell::text("unique_descriptions"), Cell::Empty, Cell::Empty, Cell::int(o.unique)]);
    t.push(vec![Cell::text("total_descriptions"), Cell::Empty, Cell::Empty, Cell::int(o.total)]);
    for (a, b, j) in o.pairs {
        t.push(vec![Cell::text("pair_jaccard"), Cell::text(a), Cell::text(b), Cell::Real(j)]);
    }
    Ok(t)
}

fn tautology_table(d: &Dataset) -> Result<Table> {
    let tensor = d.tensor();
    let c = tautology_comparison(&tensor, &d.tautology)?;
    let mut t = Table::new("tautology_table", &["set", "n", "mean_I", "mean_max_severity", "losses_per_rep"]);
    for (label, m) in [("original", c.original), ("tautology", c.tautology)] {
        t.push(vec![
            Cell::text(label),
            Cell::int(m.n),
            Cell::Real(m.mean_i),
            Cell::Real(m.mean_max_severity),
            Cell::Real(m.losses_per_rep),
        ]);
    }
    t.push(vec![
        Cell::text("ratio"),
        Cell::Empty,
        Cell::Real(c.ratio_i),
        Cell::Real(c.ratio_max_severity),
        Cell::Real(c.ratio_losses_per_rep),
    ]);
    Ok(t)
}

fn ablation_table(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let a = ablation_overlap(&d.ablation, &o.lexicon, &o.lexicon.reference_themes)?;
    let mut cols = vec!["theme"];
    cols.extend(a.rows.iter().map(|r| r.model.as_str()));
    let mut t = Table::new("ablation_table", &cols);
    for theme in &a.reference {
        let mut row = vec![Cell::text(theme)];
        row.extend(a.rows.iter().map(|r| Cell::int(r.rep_presence[theme])));
        t.push(row);
    }
    let mut reps = vec![Cell::text("reps")];
    reps.extend(a.rows.iter().map(|r| Cell::int(r.reps)));
    t.push(reps);
    let mut responses = vec![Cell::text("responses")];
    responses.extend(a.rows.iter().map(|r| Cell::int(r.responses)));
    t.push(responses);
    let mut overlap = vec![Cell::text("overlap_fraction")];
    overlap.extend(a.rows.iter().map(|r| Cell::Real(r.overlap_fraction)));
    t.push(overlap);
    Ok(t)
}

fn ablation_extras(d: &Dataset, o: &AnalysisOptions) -> Result<Table> {
    let a = ablation_overlap(&d.ablation, &o.lexicon, &o.lexicon.reference_themes)?;
    let responses: usize = a.rows.iter().map(|r| r.responses).sum();
    let mut t = Table::new("ablation_extras", &["theme", "response_fraction", "responses"]);
    for (theme, frac) in a.extras {
        t.push(vec![Cell::text(theme), Cell::Real(frac), Cell::int(responses)]);
    }
    Ok(t)
}

fn variance_table(d: &Dataset, warnings: &mut Vec<String>) -> Result<Table> {
    let tensor = nonempty(d.tensor(), "no S4 records")?;
    nonempty(d.s1s3.clone(), "no S1-S3 records")?;
    let mut t = Table::new(
        "variance_compression_table",
        &["phenomenon", "baseline_n", "baseline_variance", "tensor_n", "tensor_variance", "ratio", "infinite"],
    );
    for p in stimuli_of(&tensor) {
        let base: Vec<f64> = d
            .s1s3
            .iter()
            .filter(|r| r.stimulus == p)
            .filter_map(|r| r.scalar().map(|s| s.i()))
            .collect();
        let ten: Vec<f64> = tensor
            .iter()
            .filter(|r| r.stimulus == p)
            .filter_map(|r| r.outcome.tensor().map(|x| x.scalar.i()))
            .collect();
        match variance_compression(&base, &ten) {
            Ok(v) => t.push(vec![
                Cell::text(&p),
                Cell::int(base.len()),
                Cell::Real(v.baseline_variance),
                Cell::int(ten.len()),
                Cell::Real(v.tensor_variance),
                Cell::Real(v.ratio),
                Cell::text(v.infinite.to_string()),
            ]),
            Err(e) => warnings.push(format!("variance_compression_table: {p}: {e}")),
        }
    }
    Ok(t)
}
