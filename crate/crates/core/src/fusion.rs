//! Alpha-beta fusion of per-source class posteriors.
//!
//! For each class the sources' probabilities are combined with a weighted
//! power mean of parameter α, the mean is raised to `W^β` (W the total source
//! weight), multiplied by the prior and normalized over classes. α controls
//! smoothing of source errors, β the effective number of independent sources.
//!
//! The mean is the normalized one, `(Σ (w_i/W) P_i^α)^{1/α}`. Dropping the
//! `1/W` only rescales every class by the same constant, which the final
//! normalization removes.

use crate::coupled_math::{MathError, ProbVector, ZERO_COUPLING_THRESHOLD};
use crate::entropy::log_generalized_mean;

/// Default floor applied to source probabilities before fusion.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub alpha: f64,
    pub beta: f64,
    /// Per-source weights; `None` means every source has weight one.
    pub weights: Option<Vec<f64>>,
    /// Source probabilities below this are raised to it.
    pub floor: f64,
}

impl FusionParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MathError> {
        let params = FusionParams {
            alpha,
            beta,
            weights: None,
            floor: DEFAULT_FLOOR,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, MathError> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self, MathError> {
        self.floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), MathError> {
        if !self.alpha.is_finite() {
            return Err(MathError::InvalidArgument(format!(
                "alpha must be finite, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(MathError::InvalidArgument(format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        if let Some(w) = self
            .weights
            .iter()
            .flatten()
            .find(|w| !(w.is_finite() && **w > 0.0))
        {
            return Err(MathError::InvalidArgument(format!(
                "source weights must be positive, got {w}"
            )));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(MathError::InvalidArgument(format!(
                "probability floor must lie in (0, 1), got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Input and output coupling view of the same rule.
///
/// Source weights are `1 − κ_i`, the mean parameter is `κ_f`, and the fused
/// mean is raised to `W(1 − κ_o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskParams {
    pub kappa_inputs: Vec<f64>,
    pub kappa_fusion: f64,
    pub kappa_output: f64,
}

impl RiskParams {
    /// Output coupling that reproduces `W^β` for the given total weight.
    pub fn output_coupling_for_beta(total_weight: f64, beta: f64) -> f64 {
        1.0 - total_weight.powf(beta - 1.0)
    }
}

/// Class posteriors from each source plus the shared class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcePosteriors {
    per_source: Vec<ProbVector>,
    prior: ProbVector,
}

impl SourcePosteriors {
    pub fn new(per_source: Vec<ProbVector>, prior: ProbVector) -> Result<Self, MathError> {
        if per_source.is_empty() {
            return Err(MathError::InvalidArgument("no sources to fuse".into()));
        }
        if let Some(bad) = per_source.iter().find(|p| p.len() != prior.len()) {
            return Err(MathError::LengthMismatch {
                left: bad.len(),
                right: prior.len(),
            });
        }
        Ok(SourcePosteriors { per_source, prior })
    }

    /// Sources with a uniform prior over their classes.
    pub fn with_uniform_prior(per_source: Vec<ProbVector>) -> Result<Self, MathError> {
        let classes = per_source.first().map(ProbVector::len).unwrap_or(1);
        SourcePosteriors::new(per_source, ProbVector::uniform(classes))
    }

    pub fn sources(&self) -> &[ProbVector] {
        &self.per_source
    }

    pub fn prior(&self) -> &ProbVector {
        &self.prior
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }
}

/// Named special cases of the alpha-beta rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Product of posteriors (α = 0, β = 1).
    NaiveBayes,
    /// Geometric mean (α = 0, β = 0).
    LogAverage,
    /// Arithmetic mean (α = 1, β = 0).
    Average,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::NaiveBayes, Preset::LogAverage, Preset::Average];

    pub fn name(self) -> &'static str {
        match self {
            Preset::NaiveBayes => "naive_bayes",
            Preset::LogAverage => "log_average",
            Preset::Average => "average",
        }
    }
}

pub fn preset(name: Preset) -> FusionParams {
    let (alpha, beta) = match name {
        Preset::NaiveBayes => (0.0, 1.0),
        Preset::LogAverage => (0.0, 0.0),
        Preset::Average => (1.0, 0.0),
    };
    FusionParams::new(alpha, beta).expect("preset parameters are valid")
}

/// Fuses the sources with the alpha-beta rule.
pub fn fuse(inputs: &SourcePosteriors, params: &FusionParams) -> Result<ProbVector, MathError> {
    params.validate()?;
    let weights = resolve_weights(params.weights.as_deref(), inputs.sources().len())?;
    let total: f64 = weights.iter().sum();
    fuse_with_exponent(
        inputs,
        &weights,
        params.alpha,
        total.powf(params.beta),
        params.floor,
    )
}

/// Fuses with weights, mean parameter and output exponent given as couplings.
pub fn fuse_from_risk(
    inputs: &SourcePosteriors,
    risk: &RiskParams,
) -> Result<ProbVector, MathError> {
    if risk.kappa_inputs.len() != inputs.sources().len() {
        return Err(MathError::LengthMismatch {
            left: risk.kappa_inputs.len(),
            right: inputs.sources().len(),
        });
    }
    if let Some(k) = risk.kappa_inputs.iter().find(|k| !(1.0 - **k > 0.0)) {
        return Err(MathError::InvalidArgument(format!(
            "input coupling {k} leaves no positive weight"
        )));
    }
    if !(1.0 - risk.kappa_output > 0.0) {
        return Err(MathError::InvalidArgument(format!(
            "output coupling {} has no real beta (1 − κ_o must be positive)",
            risk.kappa_output
        )));
    }
    if !risk.kappa_fusion.is_finite() {
        return Err(MathError::InvalidArgument(
            "fusion coupling must be finite".into(),
        ));
    }
    let weights: Vec<f64> = risk.kappa_inputs.iter().map(|k| 1.0 - k).collect();
    let total: f64 = weights.iter().sum();
    fuse_with_exponent(
        inputs,
        &weights,
        risk.kappa_fusion,
        total * (1.0 - risk.kappa_output),
        DEFAULT_FLOOR,
    )
}

fn resolve_weights(weights: Option<&[f64]>, sources: usize) -> Result<Vec<f64>, MathError> {
    match weights {
        None => Ok(vec![1.0; sources]),
        Some(w) if w.len() == sources => Ok(w.to_vec()),
        Some(w) => Err(MathError::LengthMismatch {
            left: w.len(),
            right: sources,
        }),
    }
}

fn fuse_with_exponent(
    inputs: &SourcePosteriors,
    weights: &[f64],
    alpha: f64,
    exponent: f64,
    floor: f64,
) -> Result<ProbVector, MathError> {
    let total: f64 = weights.iter().sum();
    let log_weights: Vec<f64> = weights.iter().map(|w| (w / total).ln()).collect();
    let alpha = if alpha.abs() < ZERO_COUPLING_THRESHOLD {
        0.0
    } else {
        alpha
    };
    let scores: Vec<f64> = (0..inputs.num_classes())
        .map(|c| {
            let terms = inputs
                .sources()
                .iter()
                .zip(&log_weights)
                .map(move |(p, &lw)| (lw, p[c].max(floor).ln()));
            let log_mean = log_generalized_mean(terms, alpha);
            let prior = inputs.prior()[c];
            if prior == 0.0 {
                f64::NEG_INFINITY
            } else {
                exponent * log_mean + prior.ln()
            }
        })
        .collect();
    ProbVector::from_log_weights(&scores).ok_or_else(|| {
        MathError::InvalidArgument("degenerate fusion: every class scored zero".into())
    })
}
