use serde::Serialize;
use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualizationMode {
    None,
    ByStimulus,
    ByStimulusThenModel,
}

impl ResidualizationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ByStimulus => "by_stimulus",
            Self::ByStimulusThenModel => "by_stimulus_then_model",
        }
    }
}

/// Grouping applied to both variables before correlating.
#[derive(Debug, Clone, Copy)]
pub enum Residualization<'a> {
    None,
    ByStimulus(&'a [String]),
    ByStimulusThenModel {
        stimulus: &'a [String],
        model: &'a [String],
    },
}

impl Residualization<'_> {
    pub fn mode(&self) -> ResidualizationMode {
        match self {
            Self::None => ResidualizationMode::None,
            Self::ByStimulus(_) => ResidualizationMode::ByStimulus,
            Self::ByStimulusThenModel { .. } => ResidualizationMode::ByStimulusThenModel,
        }
    }

    fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::None => Ok(values.to_vec()),
            Self::ByStimulus(stimulus) => residualize(values, stimulus),
            Self::ByStimulusThenModel { stimulus, model } => {
                residualize(&residualize(values, stimulus)?, model)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub n: usize,
    pub mode: ResidualizationMode,
}

/// Subtracts each group's mean from its members.
pub fn residualize<G: Eq + Hash>(values: &[f64], groups: &[G]) -> Result<Vec<f64>> {
    if values.len() != groups.len() {
        return Err(Error::Domain(format!(
            "{} values but {} group labels",
            values.len(),
            groups.len()
        )));
    }
    let mut totals: HashMap<&G, (f64, usize)> = HashMap::new();
    for (v, g) in values.iter().zip(groups) {
        let slot = totals.entry(g).or_insert((0.0, 0));
        slot.0 += v;
        slot.1 += 1;
    }
    Ok(values
        .iter()
        .zip(groups)
        .map(|(v, g)| {
            let (sum, n) = totals[g];
            v - sum / n as f64
        })
        .collect())
}

/// 1-based ranks with ties replaced by their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            out[idx] = avg;
        }
        start = end;
    }
    out
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "paired samples differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::Domain(format!(
            "correlation needs n >= 3, got {}",
            xs.len()
        )));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_inputs(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Residuals of constant data can carry rounding noise instead of exact zeros.
    let scale_x = xs.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let scale_y = ys.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if sxx <= 1e-24 * scale_x * scale_x * n || syy <= 1e-24 * scale_y * scale_y * n {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_inputs(xs, ys)?;
    pearson(&ranks(xs), &ranks(ys))
}

/// Two-sided p-value of `r` under the t approximation with `n - 2` degrees of
/// freedom.
///
/// With `t^2 = r^2 (n-2) / (1-r^2)`, the tail mass `P(|T| > |t|)` equals the
/// regularized incomplete beta `I_{1-r^2}((n-2)/2, 1/2)`, which stays accurate
/// far below the resolution of `1 - cdf`.
pub fn two_sided_p_value(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let x = (1.0 - r * r).clamp(0.0, 1.0);
    if x == 0.0 {
        return 0.0;
    }
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x)
}

/// Pearson and Spearman correlation of `xs` against `ys` after applying
/// `residualization` to both.
pub fn correlate(
    xs: &[f64],
    ys: &[f64],
    residualization: Residualization<'_>,
) -> Result<CorrelationReport> {
    check_inputs(xs, ys)?;
    let rx = residualization.apply(xs)?;
    let ry = residualization.apply(ys)?;
    let n = xs.len();
    let pearson_r = pearson(&rx, &ry)?;
    let spearman_rho = spearman(&rx, &ry)?;
    Ok(CorrelationReport {
        pearson_r,
        pearson_p: two_sided_p_value(pearson_r, n),
        spearman_rho,
        spearman_p: two_sided_p_value(spearman_rho, n),
        n,
        mode: residualization.mode(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_linear() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 4.0, 6.0, 8.0, 10.0];
        let rep = correlate(&xs, &ys, Residualization::None).unwrap();
        assert!((rep.pearson_r - 1.0).abs() < 1e-12);
        assert!((rep.spearman_rho - 1.0).abs() < 1e-12);
        assert!(rep.pearson_p < 1e-20);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let err = correlate(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], Residualization::None);
        assert!(matches!(err, Err(Error::UndefinedCorrelation(_))));
        assert!(correlate(&[1.0, 2.0], &[1.0, 2.0], Residualization::None).is_err());
    }

    #[test]
    fn average_ranks_for_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn residuals_center_every_group() {
        let vals = [1.0, 2.0, 3.0, 10.0, 20.0];
        let groups = ["a", "a", "a", "b", "b"];
        let res = residualize(&vals, &groups).unwrap();
        assert_eq!(res, vec![-1.0, 0.0, 1.0, -5.0, 5.0]);
        assert!(residualize(&vals, &groups[..2]).is_err());
    }

    #[test]
    fn p_value_matches_student_t_tail() {
        // r = 0.5, n = 12: t = 0.5 * sqrt(10 / 0.75) = 1.825742, df = 10.
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let t = 0.5 * (10.0f64 / 0.75).sqrt();
        let dist = StudentsT::new(0.0, 1.0, 10.0).unwrap();
        let expected = 2.0 * (1.0 - dist.cdf(t));
        assert!((two_sided_p_value(0.5, 12) - expected).abs() < 1e-10);
    }

    #[test]
    fn strong_correlation_reaches_tiny_p() {
        assert!(two_sided_p_value(0.78, 125) < 1e-26);
        assert!(two_sided_p_value(0.83, 125) < 1e-32);
        // r = 0.29 at n = 125 sits just above the 1e-3 line (p = 0.00104)
        assert!(two_sided_p_value(0.29, 125) > 1e-3);
        assert!(two_sided_p_value(0.30, 125) < 1e-3);
    }

    #[test]
    fn residualized_mode_is_recorded() {
        let xs = [1.0, 2.0, 3.0, 1.5, 2.5, 4.0];
        let ys = [1.1, 2.1, 2.9, 1.0, 3.0, 3.5];
        let stim: Vec<String> = ["a", "a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let model: Vec<String> = ["x", "y", "x", "y", "x", "y"].iter().map(|s| s.to_string()).collect();
        let r = correlate(&xs, &ys, Residualization::ByStimulus(&stim)).unwrap();
        assert_eq!(r.mode, ResidualizationMode::ByStimulus);
        let r = correlate(
            &xs,
            &ys,
            Residualization::ByStimulusThenModel { stimulus: &stim, model: &model },
        )
        .unwrap();
        assert_eq!(r.mode, ResidualizationMode::ByStimulusThenModel);
        assert!((-1.0..=1.0).contains(&r.pearson_r));
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0..100.0f64, n),
                proptest::collection::vec(-100.0..100.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn spearman_invariant_under_monotone_transform((xs, ys) in paired()) {
            if let Ok(rho) = spearman(&xs, &ys) {
                let tx: Vec<f64> = xs.iter().map(|x| x.exp().min(f64::MAX) + x.powi(3)).collect();
                let rho2 = spearman(&tx, &ys).unwrap();
                prop_assert!((rho - rho2).abs() < 1e-12);
            }
        }

        #[test]
        fn pearson_invariant_under_positive_affine((xs, ys) in paired(), a in 0.1..10.0f64, b in -5.0..5.0f64) {
            if let Ok(r) = pearson(&xs, &ys) {
                let tx: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let r2 = pearson(&tx, &ys).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
            }
        }

        #[test]
        fn residualization_is_idempotent(vals in proptest::collection::vec(-10.0..10.0f64, 1..40), seed in 0u8..4) {
            let groups: Vec<u8> = vals.iter().enumerate().map(|(i, _)| (i as u8 + seed) % 3).collect();
            let once = residualize(&vals, &groups).unwrap();
            let twice = residualize(&once, &groups).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
