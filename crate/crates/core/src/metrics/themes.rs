use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::protocol::registry_order;
use crate::record::TrialRecord;
use crate::tif::LossDeclaration;

pub const DEFAULT_LEXICON_TOML: &str = include_str!("../../data/default_lexicon.toml");

/// Theme id to case-insensitive substring patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeLexicon {
    pub version: u32,
    /// Themes expected in tensor responses; anything else found in free text
    /// is reported as an extra.
    #[serde(default)]
    pub reference_themes: Vec<String>,
    pub themes: BTreeMap<String, Vec<String>>,
}

impl ThemeLexicon {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut lex: ThemeLexicon =
            toml::from_str(text).map_err(|e| Error::Config(format!("lexicon: {e}")))?;
        lex.validate()?;
        for patterns in lex.themes.values_mut() {
            for p in patterns.iter_mut() {
                *p = p.to_lowercase();
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn default_lexicon() -> Self {
        Self::from_toml(DEFAULT_LEXICON_TOML).expect("bundled lexicon is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::Config(format!(
                "unsupported lexicon version {}",
                self.version
            )));
        }
        for (theme, patterns) in &self.themes {
            if patterns.is_empty() || patterns.iter().any(|p| p.trim().is_empty()) {
                return Err(Error::Config(format!("theme `{theme}` has an empty pattern")));
            }
        }
        if self.themes.len() > 64 {
            return Err(Error::Config("at most 64 themes are supported".into()));
        }
        if let Some(missing) = self
            .reference_themes
            .iter()
            .find(|t| !self.themes.contains_key(*t))
        {
            return Err(Error::Config(format!(
                "reference theme `{missing}` has no patterns"
            )));
        }
        Ok(())
    }

    pub fn theme_ids(&self) -> Vec<&str> {
        self.themes.keys().map(String::as_str).collect()
    }

    /// Bit `k` set iff the `k`-th theme (in id order) matches `text`.
    pub(crate) fn mask(&self, text: &str) -> u64 {
        let lower = text.to_lowercase();
        self.themes
            .values()
            .enumerate()
            .filter(|(_, patterns)| patterns.iter().any(|p| lower.contains(p.as_str())))
            .fold(0u64, |acc, (k, _)| acc | (1 << k))
    }

    pub(crate) fn names(&self, mask: u64) -> BTreeSet<String> {
        self.themes
            .keys()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, id)| id.clone())
            .collect()
    }
}

/// Themes whose patterns occur in `text`.
pub fn tag_themes(text: &str, lexicon: &ThemeLexicon) -> Result<BTreeSet<String>> {
    if lexicon.themes.is_empty() {
        return Err(Error::Domain("theme lexicon is empty".into()));
    }
    Ok(lexicon.names(lexicon.mask(text)))
}

pub(crate) fn loss_text(loss: &LossDeclaration) -> String {
    format!("{}\n{}", loss.what, loss.why)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// A theme counts for a model if any repetition shows it.
    #[default]
    AnyRep,
    /// A theme counts only if every repetition shows it.
    EveryRep,
}

/// One loss declaration reduced to its labels and theme mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceUnitRaw {
    pub model: usize,
    pub stimulus: usize,
    pub rep: u32,
    pub mask: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StimulusConvergence {
    pub stimulus: String,
    pub models: usize,
    pub universal: BTreeSet<String>,
    pub mean_pairwise_jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub models: Vec<String>,
    pub universal_themes: BTreeSet<String>,
    pub universal_count: usize,
    /// Mean over stimuli of the mean pairwise model Jaccard on theme sets.
    pub mean_pairwise_jaccard: f64,
    pub per_stimulus: Vec<StimulusConvergence>,
}

/// Indexed loss units ready for repeated convergence evaluation.
#[derive(Debug, Clone)]
pub struct ConvergenceInput {
    pub models: Vec<String>,
    pub stimuli: Vec<String>,
    pub units: Vec<ConvergenceUnitRaw>,
    /// Reps present per `(model, stimulus)`, needed for every-rep mode.
    pub reps: BTreeMap<(usize, usize), BTreeSet<u32>>,
}

impl ConvergenceInput {
    pub fn from_records(records: &[TrialRecord], lexicon: &ThemeLexicon) -> Self {
        let mut models: Vec<String> = records
            .iter()
            .filter(|r| r.outcome.tensor().is_some())
            .map(|r| r.model.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        models.sort();
        let mut stimuli: Vec<String> = records
            .iter()
            .filter(|r| r.outcome.tensor().is_some())
            .map(|r| r.stimulus.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        stimuli.sort_by_key(|s| registry_order(s));

        let mut units = Vec::new();
        let mut reps: BTreeMap<(usize, usize), BTreeSet<u32>> = BTreeMap::new();
        for r in records.iter().filter(|r| r.outcome.tensor().is_some()) {
            let m = models.iter().position(|x| x == &r.model).expect("indexed");
            let s = stimuli.iter().position(|x| x == &r.stimulus).expect("indexed");
            reps.entry((m, s)).or_default().insert(r.rep);
            for loss in r.losses() {
                units.push(ConvergenceUnitRaw {
                    model: m,
                    stimulus: s,
                    rep: r.rep,
                    mask: lexicon.mask(&loss_text(loss)),
                });
            }
        }
        Self {
            models,
            stimuli,
            units,
            reps,
        }
    }

    /// Theme mask per `(model, stimulus)` under `mode`, for the given
    /// `(stimulus, rep)` labels of each unit.
    fn cell_masks(
        &self,
        labels: &[(usize, u32)],
        mode: ConvergenceMode,
    ) -> BTreeMap<(usize, usize), u64> {
        let mut per_rep: BTreeMap<(usize, usize, u32), u64> = BTreeMap::new();
        for (unit, &(stimulus, rep)) in self.units.iter().zip(labels) {
            *per_rep.entry((unit.model, stimulus, rep)).or_default() |= unit.mask;
        }
        let mut out = BTreeMap::new();
        for (&(m, s), reps) in &self.reps {
            let mask = match mode {
                ConvergenceMode::AnyRep => reps
                    .iter()
                    .map(|rep| per_rep.get(&(m, s, *rep)).copied().unwrap_or(0))
                    .fold(0, |a, b| a | b),
                ConvergenceMode::EveryRep => reps
                    .iter()
                    .map(|rep| per_rep.get(&(m, s, *rep)).copied().unwrap_or(0))
                    .fold(u64::MAX, |a, b| a & b),
            };
            out.insert((m, s), mask);
        }
        out
    }

    pub(crate) fn identity_labels(&self) -> Vec<(usize, u32)> {
        self.units.iter().map(|u| (u.stimulus, u.rep)).collect()
    }

    /// Per-stimulus universal masks and mean pairwise Jaccard.
    fn evaluate(&self, labels: &[(usize, u32)], mode: ConvergenceMode) -> Vec<(usize, usize, u64, f64)> {
        let masks = self.cell_masks(labels, mode);
        let mut out = Vec::new();
        for s in 0..self.stimuli.len() {
            let sets: Vec<u64> = (0..self.models.len())
                .filter_map(|m| masks.get(&(m, s)).copied())
                .collect();
            if sets.len() < 2 {
                continue;
            }
            let universal = sets.iter().fold(u64::MAX, |a, b| a & b);
            let mut total = 0.0;
            let mut pairs = 0usize;
            for i in 0..sets.len() {
                for j in (i + 1)..sets.len() {
                    total += mask_jaccard(sets[i], sets[j]);
                    pairs += 1;
                }
            }
            out.push((s, sets.len(), universal, total / pairs as f64));
        }
        out
    }

    /// Mean pairwise Jaccard statistic for `labels`.
    pub(crate) fn statistic(&self, labels: &[(usize, u32)], mode: ConvergenceMode) -> f64 {
        let per = self.evaluate(labels, mode);
        if per.is_empty() {
            return f64::NAN;
        }
        per.iter().map(|p| p.3).sum::<f64>() / per.len() as f64
    }
}

fn mask_jaccard(a: u64, b: u64) -> f64 {
    let union = (a | b).count_ones();
    if union == 0 {
        return 1.0;
    }
    (a & b).count_ones() as f64 / union as f64
}

/// Cross-model agreement on lexicon themes in valid tensor records.
///
/// For each stimulus, every model's theme set is pooled over its reps (or
/// intersected, in [`ConvergenceMode::EveryRep`]); a theme is universal when
/// it appears in every model's set for some stimulus.
pub fn theme_convergence(
    records: &[TrialRecord],
    lexicon: &ThemeLexicon,
    mode: ConvergenceMode,
) -> Result<ConvergenceSummary> {
    if lexicon.themes.is_empty() {
        return Err(Error::Domain("theme lexicon is empty".into()));
    }
    let input = ConvergenceInput::from_records(records, lexicon);
    if input.models.len() < 2 {
        return Err(Error::Domain(format!(
            "convergence needs at least 2 models, got {}",
            input.models.len()
        )));
    }
    let per = input.evaluate(&input.identity_labels(), mode);
    if per.is_empty() {
        return Err(Error::Empty("no stimulus has tensor data from 2+ models".into()));
    }
    let mut universal_mask = 0u64;
    let per_stimulus: Vec<StimulusConvergence> = per
        .iter()
        .map(|&(s, models, universal, mean)| {
            universal_mask |= universal;
            StimulusConvergence {
                stimulus: input.stimuli[s].clone(),
                models,
                universal: lexicon.names(universal),
                mean_pairwise_jaccard: mean,
            }
        })
        .collect();
    let universal_themes = lexicon.names(universal_mask);
    Ok(ConvergenceSummary {
        models: input.models.clone(),
        universal_count: universal_themes.len(),
        universal_themes,
        mean_pairwise_jaccard: per.iter().map(|p| p.3).sum::<f64>() / per.len() as f64,
        per_stimulus,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationModelRow {
    pub model: String,
    pub responses: usize,
    pub reps: usize,
    /// Reference theme to the number of reps in which it appears
    /// (in any stimulus response of that rep).
    pub rep_presence: BTreeMap<String, usize>,
    pub overlap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationOverlap {
    pub reference: Vec<String>,
    pub rows: Vec<AblationModelRow>,
    /// Non-reference themes found, with the share of responses showing each.
    pub extras: Vec<(String, f64)>,
}

/// Which reference themes free-form responses surface, per model.
pub fn ablation_overlap(
    records: &[TrialRecord],
    lexicon: &ThemeLexicon,
    reference: &[String],
) -> Result<AblationOverlap> {
    if lexicon.themes.is_empty() {
        return Err(Error::Domain("theme lexicon is empty".into()));
    }
    if reference.is_empty() {
        return Err(Error::Domain("reference theme list is empty".into()));
    }
    let responses: Vec<(&TrialRecord, BTreeSet<String>)> = records
        .iter()
        .filter_map(|r| r.free_text().map(|t| (r, lexicon.names(lexicon.mask(t)))))
        .collect();
    if responses.is_empty() {
        return Err(Error::Empty("no free-text responses".into()));
    }
    let models: BTreeSet<&str> = responses.iter().map(|(r, _)| r.model.as_str()).collect();
    let mut rows = Vec::new();
    for model in models {
        let mine: Vec<_> = responses.iter().filter(|(r, _)| r.model == model).collect();
        let mut by_rep: BTreeMap<u32, BTreeSet<&str>> = BTreeMap::new();
        for (r, themes) in &mine {
            by_rep
                .entry(r.rep)
                .or_default()
                .extend(themes.iter().map(String::as_str));
        }
        let rep_presence: BTreeMap<String, usize> = reference
            .iter()
            .map(|t| {
                (
                    t.clone(),
                    by_rep.values().filter(|s| s.contains(t.as_str())).count(),
                )
            })
            .collect();
        let found = rep_presence.values().filter(|&&k| k > 0).count();
        rows.push(AblationModelRow {
            model: model.to_string(),
            responses: mine.len(),
            reps: by_rep.len(),
            rep_presence,
            overlap_fraction: found as f64 / reference.len() as f64,
        });
    }
    let mut extra_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, themes) in &responses {
        for t in themes.iter().filter(|t| !reference.contains(t)) {
            *extra_counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let extras = extra_counts
        .into_iter()
        .map(|(t, k)| (t.to_string(), k as f64 / responses.len() as f64))
        .collect();
    Ok(AblationOverlap {
        reference: reference.to_vec(),
        rows,
        extras,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Strategy;
    use crate::record::TrialKey;

    fn key(model: &str, stimulus: &str, strategy: Strategy, rep: u32) -> TrialKey {
        TrialKey {
            model: model.into(),
            provider: "p".into(),
            stimulus: stimulus.into(),
            category: String::new(),
            strategy,
            rep,
        }
    }

    pub(crate) fn s4(model: &str, stimulus: &str, rep: u32, losses: &[(&str, &str)]) -> TrialRecord {
        let body: Vec<String> = losses
            .iter()
            .map(|(w, y)| format!(r#"{{"what":"{w}","why":"{y}","severity":0.5}}"#))
            .collect();
        TrialRecord::from_raw(
            key(model, stimulus, Strategy::TensorLosses, rep),
            format!(r#"{{"T":0,"I":1,"F":0,"losses":[{}]}}"#, body.join(",")),
        )
    }

    #[test]
    fn default_lexicon_loads_with_all_named_themes() {
        let lex = ThemeLexicon::default_lexicon();
        assert_eq!(lex.themes.len(), 16);
        assert_eq!(lex.reference_themes.len(), 10);
        for extra in [
            "language-ambiguity",
            "pragmatic-truth",
            "observer-dependence",
            "incompleteness",
            "logical-framework-choice",
            "temporal-change",
        ] {
            assert!(lex.themes.contains_key(extra));
            assert!(!lex.reference_themes.iter().any(|t| t == extra));
        }
    }

    #[test]
    fn lexicon_validation() {
        assert!(ThemeLexicon::from_toml("version = 2\n[themes]\na = [\"x\"]").is_err());
        assert!(ThemeLexicon::from_toml("version = 1\n[themes]\na = [\"\"]").is_err());
        assert!(ThemeLexicon::from_toml("version = 1\n[themes]\na = []").is_err());
        assert!(ThemeLexicon::from_toml(
            "version = 1\nreference_themes = [\"b\"]\n[themes]\na = [\"x\"]"
        )
        .is_err());
    }

    #[test]
    fn tagging() {
        let lex = ThemeLexicon::default_lexicon();
        assert!(tag_themes("A Self-Referential loop", &lex)
            .unwrap()
            .contains("self-reference"));
        assert!(tag_themes("", &lex).unwrap().is_empty());
        assert!(tag_themes("the ambiguity of the word 'tall'", &lex)
            .unwrap()
            .contains("language-ambiguity"));
        let empty = ThemeLexicon {
            version: 1,
            reference_themes: vec![],
            themes: BTreeMap::new(),
        };
        assert!(tag_themes("x", &empty).is_err());
    }

    #[test]
    fn convergence_single_model_is_error() {
        let lex = ThemeLexicon::default_lexicon();
        let rows = vec![s4("m", "paradox", 1, &[("liar", "x")])];
        assert!(theme_convergence(&rows, &lex, ConvergenceMode::AnyRep).is_err());
    }

    #[test]
    fn identical_theme_sets_converge_fully() {
        let lex = ThemeLexicon::default_lexicon();
        let rows = vec![
            s4("a", "paradox", 1, &[("self-reference", "liar")]),
            s4("b", "paradox", 1, &[("Self-referential loop", "bivalence")]),
            s4("c", "paradox", 1, &[("refers to itself", "excluded middle")]),
        ];
        // a: {self-reference}; b, c: {self-reference, bivalence-limits}
        let sum = theme_convergence(&rows, &lex, ConvergenceMode::AnyRep).unwrap();
        assert_eq!(sum.universal_count, 1);
        assert!((sum.mean_pairwise_jaccard - (0.5 + 0.5 + 1.0) / 3.0).abs() < 1e-12);

        let rows = vec![
            s4("a", "paradox", 1, &[("liar", "")]),
            s4("b", "paradox", 1, &[("liar", "")]),
        ];
        let sum = theme_convergence(&rows, &lex, ConvergenceMode::AnyRep).unwrap();
        assert_eq!(sum.mean_pairwise_jaccard, 1.0);
    }

    #[test]
    fn every_rep_mode_is_stricter() {
        let lex = ThemeLexicon::default_lexicon();
        let rows = vec![
            s4("a", "paradox", 1, &[("liar", "")]),
            s4("a", "paradox", 2, &[("bivalence", "")]),
            s4("b", "paradox", 1, &[("liar bivalence", "")]),
            s4("b", "paradox", 2, &[("liar bivalence", "")]),
        ];
        let any = theme_convergence(&rows, &lex, ConvergenceMode::AnyRep).unwrap();
        let every = theme_convergence(&rows, &lex, ConvergenceMode::EveryRep).unwrap();
        assert_eq!(any.universal_count, 2);
        assert_eq!(every.universal_count, 0);
    }

    #[test]
    fn ablation_rows_and_extras() {
        let lex = ThemeLexicon::default_lexicon();
        let reference = lex.reference_themes.clone();
        let rows = vec![
            TrialRecord::from_raw(
                key("a", "paradox", Strategy::Ablation, 1),
                "The sentence is self-referential; classical logic breaks. Ambiguity of words.",
            ),
            TrialRecord::from_raw(
                key("a", "paradox", Strategy::Ablation, 2),
                "Self-reference again. In practice nobody cares.",
            ),
        ];
        let out = ablation_overlap(&rows, &lex, &reference).unwrap();
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];
        assert_eq!(row.reps, 2);
        assert_eq!(row.rep_presence["self-reference"], 2);
        assert_eq!(row.rep_presence["bivalence-limits"], 1);
        assert_eq!(row.overlap_fraction, 0.2);
        let extras: BTreeMap<_, _> = out.extras.into_iter().collect();
        assert_eq!(extras["language-ambiguity"], 0.5);
        assert_eq!(extras["pragmatic-truth"], 0.5);
        assert!(ablation_overlap(&[], &lex, &reference).is_err());
    }
}
