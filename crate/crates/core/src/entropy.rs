//! Tsallis and Rényi entropies and the weighted generalized mean that links
//! them.
//!
//! Both entropies are transforms of the same probability-weighted power mean
//! of the probabilities; Tsallis maps the mean through the coupled logarithm,
//! Rényi through the natural one.

use crate::coupled_math::{
    coupled_log_unchecked, coupled_probability, Cost, Coupling, MathError, ProbVector,
    ZERO_COUPLING_THRESHOLD,
};

/// Which of the three equivalent Tsallis expressions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyForm {
    /// `Σ p_i ln_κ(1/p_i)`
    SurprisalAverage,
    /// `−Σ p_i ln_{−κ}(p_i)`
    NegLogAverage,
    /// `−Σ p_i^{1−κ} ln_κ(p_i)`
    CoupledWeighted,
}

impl EntropyForm {
    pub const ALL: [EntropyForm; 3] = [
        EntropyForm::SurprisalAverage,
        EntropyForm::NegLogAverage,
        EntropyForm::CoupledWeighted,
    ];
}

/// Weighted positive samples for [`generalized_mean`].
///
/// Zero values are accepted; how they are handled depends on the mean
/// parameter (see [`GeneralizedMean::degenerate`]).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    weights: Vec<f64>,
    values: Vec<f64>,
    total_weight: f64,
}

impl WeightedSamples {
    pub fn new(weights: Vec<f64>, values: Vec<f64>) -> Result<Self, MathError> {
        if weights.len() != values.len() {
            return Err(MathError::LengthMismatch {
                left: weights.len(),
                right: values.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(MathError::Domain {
                what: "sample weight",
                value: *w,
            });
        }
        if let Some(x) = values.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(MathError::Domain {
                what: "sample value",
                value: *x,
            });
        }
        let total_weight: f64 = weights.iter().sum();
        if !(total_weight > 0.0) {
            return Err(MathError::InvalidArgument(
                "total sample weight must be positive".into(),
            ));
        }
        Ok(WeightedSamples {
            weights,
            values,
            total_weight,
        })
    }

    /// Equal weights on every value.
    pub fn uniform(values: Vec<f64>) -> Result<Self, MathError> {
        WeightedSamples::new(vec![1.0; values.len()], values)
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Result of [`generalized_mean`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedMean {
    pub value: f64,
    /// Set when a positively weighted zero sample forced the mean to zero
    /// (mean parameter ≤ 0).
    pub degenerate: bool,
}

/// Weighted power mean `(Σ (w_i/W) x_i^α)^{1/α}`, geometric mean at α = 0.
///
/// Evaluated as `exp((1/α) · logsumexp(ln(w_i/W) + α ln x_i))` so that tiny
/// samples raised to large negative powers neither overflow nor underflow.
/// Samples with zero weight are ignored.
pub fn generalized_mean(samples: &WeightedSamples, alpha: f64) -> GeneralizedMean {
    let log_mean = log_generalized_mean(
        samples
            .weights
            .iter()
            .zip(&samples.values)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, x)| ((w / samples.total_weight).ln(), x.ln())),
        alpha,
    );
    if log_mean == f64::NEG_INFINITY {
        GeneralizedMean {
            value: 0.0,
            degenerate: alpha <= 0.0 || alpha.abs() < ZERO_COUPLING_THRESHOLD,
        }
    } else {
        GeneralizedMean {
            value: log_mean.exp(),
            degenerate: false,
        }
    }
}

/// Log of the power mean from `(ln normalized weight, ln value)` pairs.
///
/// Returns `-inf` when the mean is zero.
pub(crate) fn log_generalized_mean<I>(terms: I, alpha: f64) -> f64
where
    I: Iterator<Item = (f64, f64)> + Clone,
{
    if alpha.abs() < ZERO_COUPLING_THRESHOLD {
        let mut acc = 0.0;
        for (lw, lx) in terms {
            if lx == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            acc += lw.exp() * lx;
        }
        return acc;
    }
    if alpha < 0.0 && terms.clone().any(|(_, lx)| lx == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(terms.map(|(lw, lx)| lw + alpha * lx)) / alpha
}

/// Max-shifted `ln Σ exp(v_i)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Tsallis entropy in any of its three equivalent forms.
///
/// Zero probabilities contribute nothing (the `0 · ln_κ(1/0)` limit).
pub fn tsallis_entropy(p: &ProbVector, kappa: Coupling, form: EntropyForm) -> f64 {
    let k = kappa.value();
    let support = p.as_slice().iter().copied().filter(|&pi| pi > 0.0);
    let total: f64 = match form {
        EntropyForm::SurprisalAverage => support
            .map(|pi| pi * coupled_log_unchecked(1.0 / pi, k))
            .sum(),
        EntropyForm::NegLogAverage => support.map(|pi| -pi * coupled_log_unchecked(pi, -k)).sum(),
        EntropyForm::CoupledWeighted => support
            .map(|pi| -escort_weight(pi, k) * coupled_log_unchecked(pi, k))
            .sum(),
    };
    // one-hot inputs are exactly zero in every form
    total.max(0.0)
}

fn escort_weight(p: f64, kappa: f64) -> f64 {
    ((1.0 - kappa) * p.ln()).exp()
}

/// Tsallis entropy averaged with the coupled probabilities,
/// `−Σ P_{κ,i} ln_κ(p_i)`.
///
/// A zero probability with κ ≤ 0 has infinite coupled surprisal and makes the
/// whole entropy infinite.
pub fn normalized_tsallis(p: &ProbVector, kappa: Coupling) -> Cost {
    let k = kappa.value();
    if k <= 0.0 && p.as_slice().contains(&0.0) {
        return Cost::Infinite;
    }
    let weights = coupled_probability(p, kappa);
    let h: f64 = p
        .as_slice()
        .iter()
        .zip(weights.as_slice())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &w)| -w * coupled_log_unchecked(pi, k))
        .sum();
    Cost::Finite(h.max(0.0))
}

/// Rényi entropy `−ln M_{−κ}(p; p)`, the negative log of the
/// probability-weighted power mean of the probabilities with parameter −κ.
///
/// Equals `(1/κ) ln Σ p^{1−κ}` and the Shannon entropy at κ = 0.
pub fn renyi_entropy(p: &ProbVector, kappa: Coupling) -> Cost {
    let samples = WeightedSamples::new(p.as_slice().to_vec(), p.as_slice().to_vec())
        .expect("probability vector is a valid weighted sample");
    let mean = generalized_mean(&samples, -kappa.value());
    if mean.degenerate || mean.value == 0.0 {
        return Cost::Infinite;
    }
    Cost::Finite((-mean.value.ln()).max(0.0))
}

/// Tsallis entropy as the coupled log of the power mean of `1/p` weighted by
/// `p`, `ln_κ (Σ p_i p_i^{−κ})^{1/κ}`.
///
/// Agrees with [`tsallis_entropy`]; kept as a separate route so the identity
/// between the two is checkable.
pub fn tsallis_via_mean(p: &ProbVector, kappa: Coupling) -> Result<f64, MathError> {
    if let Some(&zero) = p.as_slice().iter().find(|&&pi| pi == 0.0) {
        return Err(MathError::Domain {
            what: "probability (tsallis_via_mean needs full support)",
            value: zero,
        });
    }
    let k = kappa.value();
    let log_mean = log_generalized_mean(p.as_slice().iter().map(|&pi| (pi.ln(), -pi.ln())), k);
    // ln_κ(e^L) = expm1(κL)/κ
    let h = if kappa.is_zero() {
        log_mean
    } else {
        (k * log_mean).exp_m1() / k
    };
    Ok(h.max(0.0))
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    tsallis_entropy(p, Coupling::ZERO, EntropyForm::SurprisalAverage)
}
