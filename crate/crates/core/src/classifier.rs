//! Gaussian class-conditional classifier with one covariance shared by all
//! classes.
//!
//! Sharing the covariance makes the quadratic part of every class's
//! log-likelihood identical, so the decision boundaries are linear.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::coupled_math::ProbVector;
use crate::entropy::log_sum_exp;

/// Default ridge, relative to the mean diagonal of the pooled covariance.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-6;

const MODEL_HEADER: &str = "riskfuse-classifier 1";

#[derive(Debug, Error)]
pub enum FitError {
    #[error("class {class} has {count} rows; at least 2 are needed")]
    TooFewRows { class: usize, count: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{rows} feature rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("ridge must be a finite non-negative number, got {0}")]
    InvalidRidge(f64),
    #[error("features contain non-finite values")]
    NonFinite,
    #[error(
        "pooled covariance (ridge {ridge}) is not positive definite; retry with a larger ridge"
    )]
    NotPositiveDefinite { ridge: f64 },
    #[error("model file: {0}")]
    Format(String),
}

/// How much to add to the covariance diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Added as is.
    Absolute(f64),
    /// Scaled by `trace(Σ)/d` of the unregularized pooled covariance.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(DEFAULT_RELATIVE_RIDGE)
    }
}

impl fmt::Display for Ridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ridge::Absolute(r) => write!(f, "{r}"),
            Ridge::Relative(r) => write!(f, "rel:{r}"),
        }
    }
}

/// `<x>` for an absolute ridge, `rel:<x>` for a relative one.
impl FromStr for Ridge {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (relative, num) = match s.strip_prefix("rel:") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let value: f64 = num
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or(FitError::InvalidRidge(f64::NAN))?;
        Ok(if relative {
            Ridge::Relative(value)
        } else {
            Ridge::Absolute(value)
        })
    }
}

/// Feature rows with class labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub rows: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledMatrix {
    pub fn new(rows: DMatrix<f64>, labels: Vec<usize>, classes: usize) -> Result<Self, FitError> {
        if rows.nrows() != labels.len() {
            return Err(FitError::ShapeMismatch {
                rows: rows.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(FitError::LabelOutOfRange { label, classes });
        }
        let counts = class_counts(&labels, classes);
        if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(FitError::TooFewRows { class, count });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        Ok(LabeledMatrix {
            rows,
            labels,
            classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }
}

fn class_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    class_means: Vec<DVector<f64>>,
    /// Pooled covariance with the ridge already on the diagonal.
    covariance: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    /// Means mapped through `L⁻¹`.
    whitened_means: Vec<DVector<f64>>,
    log_prior: Vec<f64>,
    ridge: f64,
}

/// Fits class means, the pooled covariance (divisor `n − C`) plus `ridge·I`,
/// and empirical class priors.
pub fn fit(data: &LabeledMatrix, ridge: f64) -> Result<ClassifierModel, FitError> {
    fit_with(data, Ridge::Absolute(ridge))
}

pub fn fit_with(data: &LabeledMatrix, ridge: Ridge) -> Result<ClassifierModel, FitError> {
    let (n, d, classes) = (data.len(), data.dim(), data.classes);
    let counts = class_counts(&data.labels, classes);

    let mut means = vec![DVector::<f64>::zeros(d); classes];
    for (i, &label) in data.labels.iter().enumerate() {
        means[label] += data.rows.row(i).transpose();
    }
    for (mean, &count) in means.iter_mut().zip(&counts) {
        *mean /= count as f64;
    }

    let mut centered = data.rows.clone();
    for (i, &label) in data.labels.iter().enumerate() {
        let mut row = centered.row_mut(i);
        row -= means[label].transpose();
    }
    let mut covariance = centered.transpose() * &centered / (n - classes) as f64;

    let ridge = match ridge {
        Ridge::Absolute(r) => r,
        Ridge::Relative(r) => r * covariance.trace() / d as f64,
    };
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(FitError::InvalidRidge(ridge));
    }
    for j in 0..d {
        covariance[(j, j)] += ridge;
    }

    let log_prior = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
    ClassifierModel::from_parts(means, covariance, log_prior, ridge)
}

impl ClassifierModel {
    fn from_parts(
        class_means: Vec<DVector<f64>>,
        covariance: DMatrix<f64>,
        log_prior: Vec<f64>,
        ridge: f64,
    ) -> Result<Self, FitError> {
        let factor = Cholesky::new(covariance.clone())
            .filter(|f| {
                f.l_dirty()
                    .diagonal()
                    .iter()
                    .all(|v| *v > 0.0 && v.is_finite())
            })
            .ok_or(FitError::NotPositiveDefinite { ridge })?;
        let whitened_means = class_means.iter().map(|m| whiten(&factor, m)).collect();
        Ok(ClassifierModel {
            class_means,
            covariance,
            factor,
            whitened_means,
            log_prior,
            ridge,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn class_means(&self) -> &[DVector<f64>] {
        &self.class_means
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Unnormalized log posteriors `log π_c − ½ (x−μ_c)ᵀ Σ⁻¹ (x−μ_c)`.
    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "feature dimension mismatch");
        let z = whiten(&self.factor, &DVector::from_column_slice(x));
        self.whitened_means
            .iter()
            .zip(&self.log_prior)
            .map(|(m, lp)| lp - 0.5 * (&z - m).norm_squared())
            .collect()
    }

    /// Normalized log posteriors; exact even where the linear-space value
    /// underflows.
    pub fn log_posterior(&self, x: &[f64]) -> Vec<f64> {
        let scores = self.log_scores(x);
        let norm = log_sum_exp(scores.iter().copied());
        scores.into_iter().map(|s| s - norm).collect()
    }

    pub fn posterior(&self, x: &[f64]) -> ProbVector {
        ProbVector::from_log_weights(&self.log_scores(x)).expect("finite class scores")
    }

    /// Most probable class, lowest index on ties.
    pub fn classify(&self, x: &[f64]) -> usize {
        self.posterior(x).argmax()
    }

    /// Versioned plain-text form. Floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, tag: &str, values: &mut dyn Iterator<Item = f64>| {
            out.push_str(tag);
            for v in values {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        };
        writeln!(out, "{MODEL_HEADER}").unwrap();
        writeln!(out, "classes {}", self.classes()).unwrap();
        writeln!(out, "dim {}", self.dim()).unwrap();
        writeln!(out, "ridge {:?}", self.ridge).unwrap();
        line(&mut out, "log_prior", &mut self.log_prior.iter().copied());
        for m in &self.class_means {
            line(&mut out, "mean", &mut m.iter().copied());
        }
        for r in 0..self.dim() {
            line(&mut out, "cov", &mut self.covariance.row(r).iter().copied());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FitError> {
        let bad = |msg: String| FitError::Format(msg);
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_HEADER) {
            return Err(bad(format!("expected header '{MODEL_HEADER}'")));
        }
        let mut field = |tag: &str| -> Result<Vec<f64>, FitError> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing '{tag}' line")))?;
            let mut parts = line.split_ascii_whitespace();
            if parts.next() != Some(tag) {
                return Err(bad(format!("expected '{tag}' line, got '{line}'")));
            }
            parts
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("{tag}: {e}"))))
                .collect()
        };
        let scalar = |v: Vec<f64>, tag: &str| -> Result<f64, FitError> {
            match v.as_slice() {
                [x] => Ok(*x),
                _ => Err(bad(format!("'{tag}' takes one value"))),
            }
        };
        let classes = scalar(field("classes")?, "classes")? as usize;
        let dim = scalar(field("dim")?, "dim")? as usize;
        let ridge = scalar(field("ridge")?, "ridge")?;
        let log_prior = field("log_prior")?;
        if log_prior.len() != classes {
            return Err(bad("log_prior length".into()));
        }
        let mut means = Vec::with_capacity(classes);
        for _ in 0..classes {
            let m = field("mean")?;
            if m.len() != dim {
                return Err(bad("mean length".into()));
            }
            means.push(DVector::from_vec(m));
        }
        let mut cov = Vec::with_capacity(dim * dim);
        for _ in 0..dim {
            let r = field("cov")?;
            if r.len() != dim {
                return Err(bad("covariance row length".into()));
            }
            cov.extend(r);
        }
        let covariance = DMatrix::from_row_slice(dim, dim, &cov);
        ClassifierModel::from_parts(means, covariance, log_prior, ridge)
    }
}

fn whiten(factor: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> DVector<f64> {
    factor
        .l_dirty()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal")
}
