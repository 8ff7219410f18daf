//! Deformed elementary functions of nonlinear statistical coupling.
//!
//! Every function here is parametrized by a [`Coupling`] κ. At κ = 0 they
//! reduce to the ordinary `ln`, `exp` and powers; positive κ flattens the
//! logarithm (finite cost at probability zero) and negative κ steepens it.
//!
//! The implementations go through `exp_m1`/`ln_1p` rather than the literal
//! `(x^κ - 1) / κ` so that they stay accurate as κ → 0.

use std::fmt;

use thiserror::Error;

/// Below this magnitude κ is treated as exactly zero.
///
/// `exp_m1(κ ln x) / κ` is already accurate to a few ulps well below this, so
/// a truncated series would work equally well; the switch only exists so that
/// κ = 0 itself does not divide by zero.
pub const ZERO_COUPLING_THRESHOLD: f64 = 1e-12;

/// Tolerance on the sum of a [`ProbVector`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("coupling must be finite, got {0}")]
    NonFiniteCoupling(f64),
    #[error("{what} outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// The nonlinear statistical coupling κ.
///
/// Related to the Tsallis index by κ = 1 − q. Positive values bias a metric
/// toward decisive reports, negative values toward robust ones.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Coupling(f64);

impl Coupling {
    pub const ZERO: Coupling = Coupling(0.0);

    pub fn new(kappa: f64) -> Result<Self, MathError> {
        if kappa.is_finite() {
            Ok(Coupling(kappa))
        } else {
            Err(MathError::NonFiniteCoupling(kappa))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// True when the exact κ = 0 forms are used.
    #[inline]
    pub fn is_zero(self) -> bool {
        self.0.abs() < ZERO_COUPLING_THRESHOLD
    }
}

impl TryFrom<f64> for Coupling {
    type Error = MathError;

    fn try_from(kappa: f64) -> Result<Self, Self::Error> {
        Coupling::new(kappa)
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "κ={}", self.0)
    }
}

/// A cost that may be legitimately infinite.
///
/// Robust metrics assign infinite cost to a report of probability zero for an
/// event that happened. That is a valid outcome, not an overflow, so it gets
/// its own variant instead of hiding in `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    /// The cost as a float, `+inf` for [`Cost::Infinite`].
    pub fn value(self) -> f64 {
        match self {
            Cost::Finite(v) => v,
            Cost::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

/// A discrete distribution over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, MathError> {
        if probs.is_empty() {
            return Err(MathError::InvalidProbVector("empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(MathError::InvalidProbVector(format!(
                "entry {i} = {p} not in [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(MathError::InvalidProbVector(format!(
                "entries sum to {total}"
            )));
        }
        Ok(ProbVector(probs))
    }

    /// Uniform distribution over `n` classes.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs at least one class");
        ProbVector(vec![1.0 / n as f64; n])
    }

    /// Normalizes unnormalized log-weights with a max-shifted softmax.
    ///
    /// Entries equal to `-inf` become exact zeros. Returns `None` when every
    /// weight is `-inf` or any weight is NaN/`+inf`.
    pub fn from_log_weights(log_weights: &[f64]) -> Option<Self> {
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || log_weights.iter().any(|w| w.is_nan()) {
            return None;
        }
        let shifted: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        Some(ProbVector(shifted.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Coupled logarithm `ln_κ(x) = (x^κ − 1) / κ`, natural log at κ = 0.
pub fn coupled_log(x: f64, kappa: Coupling) -> Result<f64, MathError> {
    if !(x > 0.0) {
        return Err(MathError::Domain {
            what: "coupled_log argument",
            value: x,
        });
    }
    Ok(coupled_log_unchecked(x, kappa.value()))
}

/// `ln_κ(x)` for x > 0 without validation; `x = 0` yields `-1/κ` or `-inf`.
#[inline]
pub(crate) fn coupled_log_unchecked(x: f64, kappa: f64) -> f64 {
    let ln_x = x.ln();
    if kappa.abs() < ZERO_COUPLING_THRESHOLD {
        ln_x
    } else if ln_x == f64::NEG_INFINITY {
        if kappa > 0.0 {
            -1.0 / kappa
        } else {
            f64::NEG_INFINITY
        }
    } else {
        (kappa * ln_x).exp_m1() / kappa
    }
}

/// Coupled exponential `e_κ^x = (1 + κx)_+^{1/κ}`, ordinary `exp` at κ = 0.
///
/// The bracket is clamped at zero, so the result is zero whenever
/// `1 + κx ≤ 0` and κ > 0. For κ < 0 a non-positive bracket means the value
/// has diverged and `+inf` is returned.
pub fn coupled_exp(x: f64, kappa: Coupling) -> f64 {
    coupled_exp_raw(x, kappa.value())
}

#[inline]
pub(crate) fn coupled_exp_raw(x: f64, kappa: f64) -> f64 {
    if kappa.abs() < ZERO_COUPLING_THRESHOLD {
        return x.exp();
    }
    let kx = kappa * x;
    if kx <= -1.0 {
        // (0)_+^{1/κ}: 0 for κ > 0, 0^{negative} = inf for κ < 0
        return if kappa > 0.0 { 0.0 } else { f64::INFINITY };
    }
    (kx.ln_1p() / kappa).exp()
}

/// N-fold κ-product of `x` with itself, `(N·x^κ − (N−1))_+^{1/κ}`.
///
/// Evaluated as `e_κ(N · ln_κ x)`, which is the same bracket written so that
/// it inherits the clamp and the κ → 0 limit `x^N`.
pub fn kappa_power(x: f64, n: u32, kappa: Coupling) -> Result<f64, MathError> {
    if !(x > 0.0) {
        return Err(MathError::Domain {
            what: "kappa_power base",
            value: x,
        });
    }
    if n == 0 {
        return Err(MathError::InvalidArgument(
            "kappa_power needs at least one factor".into(),
        ));
    }
    let k = kappa.value();
    Ok(coupled_exp_raw(n as f64 * coupled_log_unchecked(x, k), k))
}

/// Coupled (escort) probability `p_i^{1−κ} / Σ_j p_j^{1−κ}`.
///
/// Zero entries stay zero for every κ, matching the product form in which a
/// zero `p_i` annihilates its own numerator.
pub fn coupled_probability(p: &ProbVector, kappa: Coupling) -> ProbVector {
    escort(p.as_slice(), 1.0 - kappa.value())
}

fn escort(p: &[f64], exponent: f64) -> ProbVector {
    let log_weights: Vec<f64> = p
        .iter()
        .map(|&pi| {
            if pi > 0.0 {
                exponent * pi.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    // a valid ProbVector always has a positive entry
    ProbVector::from_log_weights(&log_weights).expect("probability vector has positive mass")
}

/// Coupled moment `Σ x_i^n p_i^{1−nκ} / Σ p_i^{1−nκ}`.
///
/// The coupling is scaled by the degree of the moment.
pub fn coupled_moment(
    x: &[f64],
    p: &ProbVector,
    n: u32,
    kappa: Coupling,
) -> Result<f64, MathError> {
    if x.len() != p.len() {
        return Err(MathError::LengthMismatch {
            left: x.len(),
            right: p.len(),
        });
    }
    if n == 0 {
        return Err(MathError::InvalidArgument(
            "moment degree must be ≥ 1".into(),
        ));
    }
    let weights = escort(p.as_slice(), 1.0 - n as f64 * kappa.value());
    Ok(x.iter()
        .zip(weights.as_slice())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&xi, &w)| xi.powi(n as i32) * w)
        .sum())
}
