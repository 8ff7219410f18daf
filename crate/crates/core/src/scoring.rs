//! Scoring rules over the probabilities reporters assigned to the true class.
//!
//! The average coupled surprisal of a batch, mapped back through the coupled
//! exponential, is the power mean of the true-class probabilities with
//! parameter κ. That "effective probability" is reported on the [0, 1]
//! scale, and sweeping κ gives a risk profile.

use std::fmt;

use crate::coupled_math::{
    coupled_exp, coupled_log_unchecked, Cost, Coupling, MathError, ZERO_COUPLING_THRESHOLD,
};
use crate::entropy::log_generalized_mean;

/// Coupling of the decisive named metric.
pub const DECISIVE_KAPPA: f64 = 0.5;
/// Coupling of the robust named metric.
pub const ROBUST_KAPPA: f64 = -0.5;

/// Probabilities each sample's reporter gave to the class that occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBatch {
    true_probs: Vec<f64>,
}

impl ScoredBatch {
    pub fn new(true_probs: Vec<f64>) -> Result<Self, MathError> {
        if true_probs.is_empty() {
            return Err(MathError::InvalidArgument("empty batch".into()));
        }
        if let Some(p) = true_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MathError::Domain {
                what: "true-class probability",
                value: *p,
            });
        }
        Ok(ScoredBatch { true_probs })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.true_probs
    }

    pub fn len(&self) -> usize {
        self.true_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_probs.is_empty()
    }

    /// Smallest and largest report.
    pub fn range(&self) -> (f64, f64) {
        let max = self.true_probs.iter().copied().fold(0.0, f64::max);
        (self.min(), max)
    }

    fn min(&self) -> f64 {
        self.true_probs
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Effective probability as a function of κ.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskProfile {
    pub kappas: Vec<f64>,
    pub p_eff: Vec<f64>,
}

impl RiskProfile {
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.kappas.iter().copied().zip(self.p_eff.iter().copied())
    }

    /// Effective probability at a grid point, matched to within 1e-9.
    pub fn at(&self, kappa: f64) -> Option<f64> {
        self.iter()
            .find(|(k, _)| (k - kappa).abs() < 1e-9)
            .map(|(_, p)| p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Shannon,
    Brier,
    CoupledSurprisal(Coupling),
}

impl Metric {
    /// The coupling whose effective probability this metric reports.
    pub fn coupling(self) -> Option<Coupling> {
        match self {
            Metric::Shannon => Some(Coupling::ZERO),
            Metric::Brier => None,
            Metric::CoupledSurprisal(k) => Some(k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Shannon => f.write_str("shannon"),
            Metric::Brier => f.write_str("brier"),
            Metric::CoupledSurprisal(k) => write!(f, "coupled_surprisal({})", k.value()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSummary {
    pub metric: Metric,
    pub mean_score: Cost,
    /// `None` for Brier.
    pub effective_probability: Option<f64>,
}

/// The decisive, neutral and robust summaries of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NamedMetrics {
    pub decisive: ScoreSummary,
    pub neutral: ScoreSummary,
    pub robust: ScoreSummary,
}

/// Coupled surprisal `−ln_κ(p) = (1 − p^κ)/κ`.
///
/// A report of zero costs `1/κ` when κ > 0 and is infinite otherwise.
pub fn coupled_surprisal(p: f64, kappa: Coupling) -> Result<Cost, MathError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MathError::Domain {
            what: "reported probability",
            value: p,
        });
    }
    Ok(surprisal_unchecked(p, kappa.value()))
}

fn surprisal_unchecked(p: f64, kappa: f64) -> Cost {
    if p == 0.0 && !(kappa >= ZERO_COUPLING_THRESHOLD) {
        return Cost::Infinite;
    }
    Cost::Finite(-coupled_log_unchecked(p, kappa))
}

/// Mean squared error `(1/N) Σ (1 − p_i)²` of the true-class reports.
pub fn brier_score(batch: &ScoredBatch) -> f64 {
    batch
        .as_slice()
        .iter()
        .map(|p| (1.0 - p) * (1.0 - p))
        .sum::<f64>()
        / batch.len() as f64
}

/// Mean coupled surprisal of the batch; infinite if any term is.
pub fn mean_coupled_surprisal(batch: &ScoredBatch, kappa: Coupling) -> Cost {
    let mut total = 0.0;
    for &p in batch.as_slice() {
        match surprisal_unchecked(p, kappa.value()) {
            Cost::Finite(s) => total += s,
            Cost::Infinite => return Cost::Infinite,
        }
    }
    Cost::Finite(total / batch.len() as f64)
}

/// Power mean `((1/N) Σ p_i^κ)^{1/κ}` of the true-class probabilities,
/// geometric mean at κ = 0.
///
/// Zero when any report is zero and κ ≤ 0.
pub fn effective_probability(batch: &ScoredBatch, kappa: Coupling) -> f64 {
    let log_weight = -(batch.len() as f64).ln();
    let log_mean = log_generalized_mean(
        batch.as_slice().iter().map(|&p| (log_weight, p.ln())),
        kappa.value(),
    );
    log_mean.exp().clamp(0.0, 1.0)
}

/// The same quantity computed as `e_κ(−S̄_κ)` from the mean coupled surprisal.
pub fn effective_probability_via_surprisal(batch: &ScoredBatch, kappa: Coupling) -> f64 {
    match mean_coupled_surprisal(batch, kappa) {
        Cost::Finite(s) => coupled_exp(-s, kappa).clamp(0.0, 1.0),
        Cost::Infinite => 0.0,
    }
}

/// κ grid from −1 to 1 in steps of 0.05.
pub fn default_kappa_grid() -> Vec<f64> {
    (-20..=20).map(|i| i as f64 / 20.0).collect()
}

/// Effective probability at every point of a strictly increasing κ grid.
pub fn risk_profile(batch: &ScoredBatch, kappa_grid: &[f64]) -> Result<RiskProfile, MathError> {
    if kappa_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MathError::InvalidArgument(
            "κ grid must be strictly increasing".into(),
        ));
    }
    let p_eff = kappa_grid
        .iter()
        .map(|&k| Coupling::new(k).map(|k| effective_probability(batch, k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RiskProfile {
        kappas: kappa_grid.to_vec(),
        p_eff,
    })
}

/// Mean score and, where defined, effective probability for one metric.
pub fn summarize(batch: &ScoredBatch, metric: Metric) -> ScoreSummary {
    match metric.coupling() {
        None => ScoreSummary {
            metric,
            mean_score: Cost::Finite(brier_score(batch)),
            effective_probability: None,
        },
        Some(kappa) => ScoreSummary {
            metric,
            mean_score: mean_coupled_surprisal(batch, kappa),
            effective_probability: Some(effective_probability(batch, kappa)),
        },
    }
}

/// Decisive (κ = 0.5), neutral (Shannon) and robust (κ = −0.5) summaries.
pub fn named_metrics(batch: &ScoredBatch) -> NamedMetrics {
    let coupled = |k: f64| Metric::CoupledSurprisal(Coupling::new(k).expect("finite"));
    NamedMetrics {
        decisive: summarize(batch, coupled(DECISIVE_KAPPA)),
        neutral: summarize(batch, Metric::Shannon),
        robust: summarize(batch, coupled(ROBUST_KAPPA)),
    }
}
