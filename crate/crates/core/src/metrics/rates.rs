use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::protocol::Strategy;
use crate::record::TrialRecord;
use crate::tif::ScalarTif;

/// Arithmetic mean, `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample variance with the `n - 1` denominator, `None` below two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub fraction: f64,
    pub numerator: usize,
    pub denominator: usize,
}

/// Share of scalar-bearing valid records passing `filter` whose sum exceeds 1.
pub fn hyper_truth_rate<'a, I, F>(records: I, filter: F) -> Result<Rate>
where
    I: IntoIterator<Item = &'a TrialRecord>,
    F: Fn(&TrialRecord) -> bool,
{
    let mut numerator = 0;
    let mut denominator = 0;
    for r in records {
        if !r.is_valid() || !filter(r) {
            continue;
        }
        if let Some(hyper) = r.hyper_truth {
            denominator += 1;
            if hyper {
                numerator += 1;
            }
        }
    }
    if denominator == 0 {
        return Err(Error::Empty("no valid scalar records pass the filter".into()));
    }
    Ok(Rate {
        fraction: numerator as f64 / denominator as f64,
        numerator,
        denominator,
    })
}

/// Sample standard deviation over the mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "coefficient of variation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let m = mean(values).expect("non-empty");
    if m == 0.0 {
        return Err(Error::Domain("coefficient of variation of zero-mean data".into()));
    }
    let var = sample_variance(values).expect("n >= 2");
    Ok(var.sqrt() / m)
}

pub fn manhattan_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Component-wise mean of the scalars of valid records.
pub fn mean_triple<'a, I>(records: I) -> Option<[f64; 3]>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for s in records.into_iter().filter_map(TrialRecord::scalar) {
        for (slot, v) in acc.iter_mut().zip(s.as_array()) {
            *slot += v;
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|v| v / n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellAggregate {
    pub model: String,
    pub stimulus: String,
    pub strategy: Strategy,
    pub mean_t: f64,
    pub mean_i: f64,
    pub mean_f: f64,
    pub mean_sum: f64,
    pub hyper_truth_fraction: f64,
    /// Reps with a valid scalar.
    pub valid_reps: usize,
    pub total_reps: usize,
    pub modal: ScalarTif,
    pub modal_count: usize,
}

/// One aggregate per `(model, stimulus, strategy)` cell with at least one
/// valid scalar, sorted by that key.
///
/// Modal ties go to the lowest-sum triple, then the lexicographically
/// smallest `(T, I, F)`.
pub fn aggregate_cells(records: &[TrialRecord]) -> Vec<CellAggregate> {
    let mut cells: BTreeMap<(String, String, Strategy), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.model.clone(), r.stimulus.clone(), r.strategy))
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((model, stimulus, strategy), rows) in cells {
        let scalars: Vec<ScalarTif> = rows.iter().filter_map(|r| r.scalar()).collect();
        if scalars.is_empty() {
            continue;
        }
        let n = scalars.len() as f64;
        let mean_of = |f: fn(&ScalarTif) -> f64| scalars.iter().map(f).sum::<f64>() / n;
        let hyper = scalars.iter().filter(|s| s.is_hyper_truth()).count();

        let mut counts: Vec<(ScalarTif, usize)> = Vec::new();
        for s in &scalars {
            match counts.iter_mut().find(|(c, _)| c.bits() == s.bits()) {
                Some((_, k)) => *k += 1,
                None => counts.push((*s, 1)),
            }
        }
        counts.sort_by(|(a, ka), (b, kb)| {
            kb.cmp(ka)
                .then(a.sum().total_cmp(&b.sum()))
                .then(a.t().total_cmp(&b.t()))
                .then(a.i().total_cmp(&b.i()))
                .then(a.f().total_cmp(&b.f()))
        });
        let (modal, modal_count) = counts[0];

        out.push(CellAggregate {
            model,
            stimulus,
            strategy,
            mean_t: mean_of(ScalarTif::t),
            mean_i: mean_of(ScalarTif::i),
            mean_f: mean_of(ScalarTif::f),
            mean_sum: mean_of(ScalarTif::sum),
            hyper_truth_fraction: hyper as f64 / n,
            valid_reps: scalars.len(),
            total_reps: rows.len(),
            modal,
            modal_count,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityProfile {
    pub phenomenon: String,
    pub mean_severity: f64,
    pub losses_per_rep: f64,
    pub valid_reps: usize,
    pub total_losses: usize,
    /// Max severity of each valid response, in record order.
    pub max_severities: Vec<f64>,
}

/// Severity statistics over the valid tensor records of one phenomenon.
pub fn severity_profile<'a, I>(phenomenon: &str, records: I) -> Result<SeverityProfile>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut severities = Vec::new();
    let mut max_severities = Vec::new();
    for tensor in records.into_iter().filter_map(|r| r.outcome.tensor()) {
        severities.extend(tensor.losses.iter().map(|l| l.severity));
        if let Some(m) = tensor.max_severity() {
            max_severities.push(m);
        }
    }
    if max_severities.is_empty() {
        return Err(Error::Empty(format!("no valid tensor records for `{phenomenon}`")));
    }
    Ok(SeverityProfile {
        phenomenon: phenomenon.to_string(),
        mean_severity: mean(&severities).expect("at least one loss per valid tensor"),
        losses_per_rep: severities.len() as f64 / max_severities.len() as f64,
        valid_reps: max_severities.len(),
        total_losses: severities.len(),
        max_severities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TensorMeans {
    pub mean_i: f64,
    pub mean_max_severity: f64,
    pub losses_per_rep: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TautologyComparison {
    pub original: TensorMeans,
    pub tautology: TensorMeans,
    /// Tautology over original for I, max severity and losses per rep.
    pub ratio_i: f64,
    pub ratio_max_severity: f64,
    pub ratio_losses_per_rep: f64,
}

fn tensor_means<'a, I>(records: I, label: &str) -> Result<TensorMeans>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let tensors: Vec<_> = records.into_iter().filter_map(|r| r.outcome.tensor()).collect();
    if tensors.is_empty() {
        return Err(Error::Empty(format!("no valid tensor records in {label} set")));
    }
    let n = tensors.len() as f64;
    Ok(TensorMeans {
        mean_i: tensors.iter().map(|t| t.scalar.i()).sum::<f64>() / n,
        mean_max_severity: tensors
            .iter()
            .map(|t| t.max_severity().unwrap_or(0.0))
            .sum::<f64>()
            / n,
        losses_per_rep: tensors.iter().map(|t| t.losses.len()).sum::<usize>() as f64 / n,
        n: tensors.len(),
    })
}

pub fn tautology_comparison<'a, I, J>(original: I, tautology: J) -> Result<TautologyComparison>
where
    I: IntoIterator<Item = &'a TrialRecord>,
    J: IntoIterator<Item = &'a TrialRecord>,
{
    let original = tensor_means(original, "original")?;
    let tautology = tensor_means(tautology, "tautology")?;
    Ok(TautologyComparison {
        ratio_i: tautology.mean_i / original.mean_i,
        ratio_max_severity: tautology.mean_max_severity / original.mean_max_severity,
        ratio_losses_per_rep: tautology.losses_per_rep / original.losses_per_rep,
        original,
        tautology,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub baseline_variance: f64,
    pub tensor_variance: f64,
    pub ratio: f64,
    /// Tensor variance is zero while the baseline is not.
    pub infinite: bool,
}

/// Sample variance of the S1-S3 I values over that of the S4 I values.
pub fn variance_compression(baseline_i: &[f64], tensor_i: &[f64]) -> Result<VarianceRatio> {
    let baseline_variance = sample_variance(baseline_i)
        .ok_or_else(|| Error::Domain("baseline needs at least 2 I values".into()))?;
    let tensor_variance = sample_variance(tensor_i)
        .ok_or_else(|| Error::Domain("tensor set needs at least 2 I values".into()))?;
    let (ratio, infinite) = if tensor_variance == 0.0 {
        if baseline_variance == 0.0 {
            (1.0, false)
        } else {
            (f64::INFINITY, true)
        }
    } else {
        (baseline_variance / tensor_variance, false)
    };
    Ok(VarianceRatio {
        baseline_variance,
        tensor_variance,
        ratio,
        infinite,
    })
}
