//! Neutrosophic value types and the quantities derived from a single evaluation.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on `p_yes + p_no = 1` for binary estimates.
pub const BINARY_SUM_TOLERANCE: f64 = 1e-6;

/// Default tolerance used when matching a triple against a position template.
pub const DEFAULT_POSITION_TOLERANCE: f64 = 0.05;

fn check_unit(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} is outside [0, 1]")))
    }
}

/// Independent truth, indeterminacy and falsity degrees, each in `[0, 1]`.
///
/// No relation between the three components is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTif")]
pub struct ScalarTif {
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "F")]
    f: f64,
}

#[derive(Deserialize)]
struct RawTif {
    #[serde(rename = "T")]
    t: f64,
    #[serde(rename = "I")]
    i: f64,
    #[serde(rename = "F")]
    f: f64,
}

impl TryFrom<RawTif> for ScalarTif {
    type Error = Error;

    fn try_from(raw: RawTif) -> Result<Self> {
        Self::new(raw.t, raw.i, raw.f)
    }
}

impl ScalarTif {
    pub fn new(t: f64, i: f64, f: f64) -> Result<Self> {
        check_unit("T", t)?;
        check_unit("I", i)?;
        check_unit("F", f)?;
        Ok(Self { t, i, f })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn i(&self) -> f64 {
        self.i
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t, self.i, self.f]
    }

    /// `T + I + F`, computed as the correctly rounded value of the exact
    /// decimal sum of the three components.
    ///
    /// Parsed values such as `0.33, 0.56, 0.11` therefore sum to exactly `1.0`
    /// instead of drifting one ulp either side.
    pub fn sum(&self) -> f64 {
        decimal_sum(&[self.t, self.i, self.f])
    }

    /// Strictly `sum() > 1.0`.
    pub fn is_hyper_truth(&self) -> bool {
        self.sum() > 1.0
    }

    /// Bitwise identity key, used to count exact repeats of a triple.
    pub fn bits(&self) -> (u64, u64, u64) {
        (self.t.to_bits(), self.i.to_bits(), self.f.to_bits())
    }
}

impl fmt::Display for ScalarTif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(T={}, I={}, F={})", self.t, self.i, self.f)
    }
}

/// Free-function form of [`ScalarTif::sum`].
pub fn sum(s: &ScalarTif) -> f64 {
    s.sum()
}

/// Free-function form of [`ScalarTif::is_hyper_truth`].
pub fn is_hyper_truth(s: &ScalarTif) -> bool {
    s.is_hyper_truth()
}

/// Adds non-negative finite values exactly in decimal using each value's
/// shortest round-trip representation, then rounds once to `f64`.
fn decimal_sum(values: &[f64]) -> f64 {
    let parts: Vec<(String, String)> = values
        .iter()
        .map(|v| {
            let s = format!("{v}");
            match s.split_once('.') {
                Some((int, frac)) => (int.to_string(), frac.to_string()),
                None => (s, String::new()),
            }
        })
        .collect();
    let width = parts.iter().map(|(_, frac)| frac.len()).max().unwrap_or(0);
    let mut frac_digits = vec![0u32; width];
    for (_, frac) in &parts {
        for (slot, c) in frac_digits.iter_mut().zip(frac.chars()) {
            *slot += c.to_digit(10).unwrap_or(0);
        }
    }
    let mut carry = 0u32;
    for slot in frac_digits.iter_mut().rev() {
        let total = *slot + carry;
        *slot = total % 10;
        carry = total / 10;
    }
    let int_total: u64 = parts
        .iter()
        .map(|(int, _)| int.parse::<u64>().unwrap_or(0))
        .sum::<u64>()
        + carry as u64;
    let frac: String = frac_digits
        .iter()
        .map(|d| char::from_digit(*d, 10).unwrap_or('0'))
        .collect();
    format!("{int_total}.{frac}0").parse().unwrap_or(f64::NAN)
}

/// A yes/no probability pair that must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBinary")]
pub struct BinaryEstimate {
    #[serde(rename = "P_yes")]
    p_yes: f64,
    #[serde(rename = "P_no")]
    p_no: f64,
}

#[derive(Deserialize)]
struct RawBinary {
    #[serde(rename = "P_yes")]
    p_yes: f64,
    #[serde(rename = "P_no")]
    p_no: f64,
}

impl TryFrom<RawBinary> for BinaryEstimate {
    type Error = Error;

    fn try_from(raw: RawBinary) -> Result<Self> {
        Self::new(raw.p_yes, raw.p_no)
    }
}

impl BinaryEstimate {
    pub fn new(p_yes: f64, p_no: f64) -> Result<Self> {
        check_unit("P_yes", p_yes)?;
        check_unit("P_no", p_no)?;
        if (p_yes + p_no - 1.0).abs() > BINARY_SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "P_yes + P_no = {} differs from 1.0 by more than {BINARY_SUM_TOLERANCE}",
                p_yes + p_no
            )));
        }
        Ok(Self { p_yes, p_no })
    }

    pub fn p_yes(&self) -> f64 {
        self.p_yes
    }

    pub fn p_no(&self) -> f64 {
        self.p_no
    }
}

/// Binary Shannon entropy in bits, with `0 * log2(0) = 0`.
pub fn entropy_indeterminacy(p_yes: f64) -> Result<f64> {
    check_unit("p_yes", p_yes)?;
    let term = |p: f64| if p > 0.0 { p * p.log2() } else { 0.0 };
    let h = -(term(p_yes) + term(1.0 - p_yes));
    // -0.0 at the endpoints
    Ok(h.clamp(0.0, 1.0))
}

/// Maps a binary estimate onto the cube as `(p_yes, H(p_yes), p_no)`.
pub fn s3_to_tif(b: &BinaryEstimate) -> ScalarTif {
    let h = entropy_indeterminacy(b.p_yes).expect("binary estimate is validated on construction");
    ScalarTif {
        t: b.p_yes,
        i: h,
        f: b.p_no,
    }
}

/// A self-reported limit on the evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDeclaration {
    pub what: String,
    pub why: String,
    pub severity: f64,
}

impl LossDeclaration {
    pub fn new(what: impl Into<String>, why: impl Into<String>, severity: f64) -> Result<Self> {
        let what = what.into();
        if what.trim().is_empty() {
            return Err(Error::Domain("loss `what` is empty".into()));
        }
        check_unit("severity", severity)?;
        Ok(Self {
            what,
            why: why.into(),
            severity,
        })
    }
}

/// Scalar triple plus the ordered list of declared losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEvaluation {
    pub scalar: ScalarTif,
    pub losses: Vec<LossDeclaration>,
}

impl TensorEvaluation {
    pub fn max_severity(&self) -> Option<f64> {
        self.losses.iter().map(|l| l.severity).reduce(f64::max)
    }

    pub fn mean_severity(&self) -> Option<f64> {
        if self.losses.is_empty() {
            return None;
        }
        Some(self.losses.iter().map(|l| l.severity).sum::<f64>() / self.losses.len() as f64)
    }
}

/// How a model reads the liar paradox on the T/I/F cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EpistemicPosition {
    /// `(0.5, 1.0, 0.5)`
    Saturation,
    /// `(0.5, 0.5, 0.5)`
    BalancedConflict,
    /// `(0.0, 1.0, 0.0)`
    Absorption,
    Other,
}

impl EpistemicPosition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Saturation => "saturation",
            Self::BalancedConflict => "balanced_conflict",
            Self::Absorption => "absorption",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for EpistemicPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Matches `s` against the position templates in the order
/// Saturation, BalancedConflict, Absorption. `tol` must lie in `[0, 0.25)`.
pub fn classify_position(s: &ScalarTif, tol: f64) -> Result<EpistemicPosition> {
    if !(0.0..0.25).contains(&tol) {
        return Err(Error::Domain(format!("position tolerance {tol} outside [0, 0.25)")));
    }
    let near = |x: f64, target: f64| (x - target).abs() <= tol;
    let pos = if near(s.t, 0.5) && near(s.i, 1.0) && near(s.f, 0.5) {
        EpistemicPosition::Saturation
    } else if near(s.t, 0.5) && near(s.i, 0.5) && near(s.f, 0.5) {
        EpistemicPosition::BalancedConflict
    } else if s.t <= tol && s.f <= tol && s.i >= 1.0 - tol {
        EpistemicPosition::Absorption
    } else {
        EpistemicPosition::Other
    };
    Ok(pos)
}
