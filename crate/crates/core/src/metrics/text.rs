use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

use crate::protocol::registry_order;
use crate::record::TrialRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TokenizerOptions {
    pub remove_stopwords: bool,
}

// Small English function-word list; only consulted with `remove_stopwords`.
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "it's", "its",
    "itself", "me", "more", "most", "my", "myself", "no", "nor", "not", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Lower-cases, splits on anything that is not a letter, digit or apostrophe,
/// trims quoting apostrophes from token edges, and returns the token set.
pub fn tokenize_loss_text(text: &str, options: TokenizerOptions) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|tok| tok.trim_matches('\''))
        .filter(|tok| !tok.is_empty())
        .filter(|tok| !(options.remove_stopwords && STOPWORDS.contains(tok)))
        .map(str::to_string)
        .collect()
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counted as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Union of the `what` tokens over every valid tensor record given.
pub fn pooled_vocabulary<'a, I>(records: I, options: TokenizerOptions) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    records
        .into_iter()
        .flat_map(|r| r.losses())
        .flat_map(|loss| tokenize_loss_text(&loss.what, options))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JaccardMatrix {
    pub phenomena: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl JaccardMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.phenomena.iter().position(|p| p == a)?;
        let j = self.phenomena.iter().position(|p| p == b)?;
        Some(self.values[i][j])
    }

    /// Upper-triangle entries `(row, col, value)`, row-major.
    pub fn off_diagonal(&self) -> Vec<(&str, &str, f64)> {
        let mut out = Vec::new();
        for i in 0..self.phenomena.len() {
            for j in (i + 1)..self.phenomena.len() {
                out.push((
                    self.phenomena[i].as_str(),
                    self.phenomena[j].as_str(),
                    self.values[i][j],
                ));
            }
        }
        out
    }
}

/// Loss-vocabulary Jaccard between every pair of phenomena for one model.
///
/// Phenomena without a valid tensor record for `model` are left out and
/// reported in the returned warnings.
pub fn pairwise_jaccard_matrix(
    model: &str,
    records: &[TrialRecord],
    phenomena: &[String],
    options: TokenizerOptions,
) -> (JaccardMatrix, Vec<String>) {
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    let mut vocab = Vec::new();
    for p in phenomena {
        let rows: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.model == model && &r.stimulus == p && r.outcome.tensor().is_some())
            .collect();
        if rows.is_empty() {
            warnings.push(format!("{model}: no valid tensor reps for `{p}`, excluded"));
            continue;
        }
        kept.push(p.clone());
        vocab.push(pooled_vocabulary(rows, options));
    }
    let values = vocab
        .iter()
        .map(|a| vocab.iter().map(|b| jaccard(a, b)).collect())
        .collect();
    (
        JaccardMatrix {
            phenomena: kept,
            values,
        },
        warnings,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossOverlap {
    pub unique: usize,
    pub total: usize,
    /// `(stimulus_a, stimulus_b, jaccard)` over exact normalized descriptions.
    pub pairs: Vec<(String, String, f64)>,
}

fn normalize_description(what: &str) -> String {
    what.trim().to_lowercase()
}

/// Counts distinct normalized loss descriptions and compares the description
/// sets of every stimulus pair.
pub fn cross_stimulus_loss_overlap(records: &[TrialRecord]) -> LossOverlap {
    let mut by_stimulus: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut all = BTreeSet::new();
    let mut total = 0;
    for r in records {
        for loss in r.losses() {
            let d = normalize_description(&loss.what);
            total += 1;
            all.insert(d.clone());
            by_stimulus.entry(r.stimulus.as_str()).or_default().insert(d);
        }
    }
    let mut stimuli: Vec<&str> = by_stimulus.keys().copied().collect();
    stimuli.sort_by_key(|s| registry_order(s));
    let mut pairs = Vec::new();
    for (i, a) in stimuli.iter().enumerate() {
        for b in &stimuli[i + 1..] {
            pairs.push((
                a.to_string(),
                b.to_string(),
                jaccard(&by_stimulus[a], &by_stimulus[b]),
            ));
        }
    }
    LossOverlap {
        unique: all.len(),
        total,
        pairs,
    }
}
