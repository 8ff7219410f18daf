//! The mfeat fusion experiment: per-set classifiers, alpha sweeps, the
//! alpha-beta grid and risk profiles, each written as a small CSV file.
//!
//! Everything after training works on a [`PosteriorTable`], the test-split
//! posteriors of every feature set. Grid cells and samples are independent,
//! so they run on a rayon pool of `workers` threads and are merged in grid
//! order; the output does not depend on the worker count.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{fit_with, FitError, Ridge};
use crate::coupled_math::{Cost, Coupling, MathError, ProbVector};
use crate::dataset::{
    self, select_rows, DataError, FeatureKind, FeatureSet, SplitSpec, DEFAULT_BASE_URL,
};
use crate::fusion::{self, fuse, FusionParams, Preset, SourcePosteriors, DEFAULT_FLOOR};
use crate::scoring::{
    self, default_kappa_grid, risk_profile, Metric, RiskProfile, ScoredBatch, DECISIVE_KAPPA,
    ROBUST_KAPPA,
};

/// Largest probability floor accepted by [`RunConfig::validate`].
pub const MAX_FLOOR: f64 = 1e-3;
pub const DEFAULT_BINS: usize = 20;
/// Default (α, β) of the `alpha_beta` method in risk profiles.
pub const REFERENCE_ALPHA_BETA: (f64, f64) = (0.4, 0.6);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training the {set} classifier")]
    Fit {
        set: FeatureKind,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl ExperimentError {
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Data(_) | ExperimentError::Output { .. } => 2,
            ExperimentError::Fit { .. } | ExperimentError::Math(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cache_dir: PathBuf,
    pub base_url: String,
    pub split: SplitSpec,
    pub ridge: Ridge,
    pub floor: f64,
    pub kappa_grid: Vec<f64>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cache_dir: PathBuf::from("data/mfeat"),
            base_url: DEFAULT_BASE_URL.to_string(),
            split: SplitSpec::default(),
            ridge: Ridge::default(),
            floor: DEFAULT_FLOOR,
            kappa_grid: default_kappa_grid(),
            out_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(self.floor > 0.0 && self.floor <= MAX_FLOOR) {
            return bad(format!(
                "floor must lie in (0, {MAX_FLOOR}], got {}",
                self.floor
            ));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.kappa_grid.is_empty() || self.kappa_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("κ grid must be non-empty and strictly increasing".into());
        }
        match self.ridge {
            Ridge::Absolute(r) | Ridge::Relative(r) if !(r.is_finite() && r >= 0.0) => {
                bad(format!("ridge must be non-negative, got {r}"))
            }
            _ => self.split.validate().map_err(ExperimentError::from),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, ExperimentError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))
    }
}

/// Parses `lo:hi:step` (inclusive) or a comma-separated list.
///
/// Range points are rounded to 12 decimals so that `0.1` steps land on the
/// decimal values they name.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, ExperimentError> {
    let bad = || ExperimentError::Config(format!("bad value list '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[..] {
        [lo, hi, step] => {
            let (lo, hi, step): (f64, f64, f64) = (
                lo.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
            );
            if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| tidy(lo + i as f64 * step)).collect())
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

fn tidy(v: f64) -> f64 {
    // + 0.0 turns -0.0 into 0.0
    (v * 1e12).round() / 1e12 + 0.0
}

/// Fetches and parses all six feature sets.
pub fn ingest(config: &RunConfig) -> Result<Vec<FeatureSet>, ExperimentError> {
    Ok(dataset::load_all(&config.cache_dir, &config.base_url)?)
}

/// Test-split posteriors of every source, row-aligned.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    pub sources: Vec<FeatureKind>,
    /// `posteriors[sample][source]`
    pub posteriors: Vec<Vec<ProbVector>>,
    pub labels: Vec<usize>,
}

impl PosteriorTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The same samples seen through a subset of the sources.
    pub fn restrict(&self, keep: &[FeatureKind]) -> PosteriorTable {
        let cols: Vec<usize> = keep
            .iter()
            .filter_map(|k| self.sources.iter().position(|s| s == k))
            .collect();
        PosteriorTable {
            sources: cols.iter().map(|&c| self.sources[c]).collect(),
            posteriors: self
                .posteriors
                .iter()
                .map(|row| cols.iter().map(|&c| row[c].clone()).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSetResult {
    pub kind: FeatureKind,
    pub dim: usize,
    pub misclassified: usize,
}

/// Trains one classifier per feature set on the training split and returns
/// its test misclassifications together with the test posteriors.
pub fn train_and_score(
    sets: &[FeatureSet],
    config: &RunConfig,
) -> Result<(Vec<SingleSetResult>, PosteriorTable), ExperimentError> {
    config.validate()?;
    let (train_idx, test_idx) = config.split.indices()?;
    let pool = config.pool()?;
    let per_set: Vec<(SingleSetResult, Vec<ProbVector>, Vec<usize>)> = pool.install(|| {
        sets.par_iter()
            .map(|fs| {
                let train = select_rows(fs, &train_idx);
                let test = select_rows(fs, &test_idx);
                let model =
                    fit_with(&train, config.ridge).map_err(|source| ExperimentError::Fit {
                        set: fs.kind,
                        source,
                    })?;
                let posteriors: Vec<ProbVector> = (0..test.len())
                    .map(|i| model.posterior(test.rows.row(i).transpose().as_slice()))
                    .collect();
                let misclassified = posteriors
                    .iter()
                    .zip(&test.labels)
                    .filter(|(p, &y)| p.argmax() != y)
                    .count();
                Ok((
                    SingleSetResult {
                        kind: fs.kind,
                        dim: fs.dim(),
                        misclassified,
                    },
                    posteriors,
                    test.labels,
                ))
            })
            .collect::<Result<_, ExperimentError>>()
    })?;

    let labels = per_set
        .first()
        .map(|(_, _, l)| l.clone())
        .unwrap_or_default();
    let mut posteriors = vec![Vec::with_capacity(per_set.len()); labels.len()];
    for (_, set_posteriors, _) in &per_set {
        for (row, p) in posteriors.iter_mut().zip(set_posteriors) {
            row.push(p.clone());
        }
    }
    let table = PosteriorTable {
        sources: sets.iter().map(|s| s.kind).collect(),
        posteriors,
        labels,
    };
    Ok((per_set.into_iter().map(|(r, _, _)| r).collect(), table))
}

/// Fused posteriors of every test sample under one parameter setting.
#[derive(Debug, Clone)]
pub struct MethodEvaluation {
    pub true_probs: ScoredBatch,
    pub misclassified: usize,
}

pub fn evaluate(
    table: &PosteriorTable,
    params: &FusionParams,
) -> Result<MethodEvaluation, ExperimentError> {
    let mut true_probs = Vec::with_capacity(table.len());
    let mut misclassified = 0;
    for (row, &label) in table.posteriors.iter().zip(&table.labels) {
        let fused = fuse(&SourcePosteriors::with_uniform_prior(row.clone())?, params)?;
        if fused.argmax() != label {
            misclassified += 1;
        }
        true_probs.push(fused[label]);
    }
    Ok(MethodEvaluation {
        true_probs: ScoredBatch::new(true_probs)?,
        misclassified,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub misclassified: usize,
}

/// Misclassifications of the fused posterior at each α with β = 0.
pub fn alpha_sweep(
    table: &PosteriorTable,
    alphas: &[f64],
    config: &RunConfig,
) -> Result<Vec<SweepPoint>, ExperimentError> {
    config.validate()?;
    config.pool()?.install(|| {
        alphas
            .par_iter()
            .map(|&alpha| {
                let params = FusionParams::new(alpha, 0.0)?.with_floor(config.floor)?;
                Ok(SweepPoint {
                    alpha,
                    misclassified: evaluate(table, &params)?.misclassified,
                })
            })
            .collect()
    })
}

/// Metrics scored over the alpha-beta grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridMetric {
    Shannon,
    Brier,
    Decisive,
    Robust,
}

impl GridMetric {
    pub const ALL: [GridMetric; 4] = [
        GridMetric::Shannon,
        GridMetric::Brier,
        GridMetric::Decisive,
        GridMetric::Robust,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridMetric::Shannon => "shannon",
            GridMetric::Brier => "brier",
            GridMetric::Decisive => "decisive",
            GridMetric::Robust => "robust",
        }
    }

    pub fn metric(self) -> Metric {
        let coupled = |k| Metric::CoupledSurprisal(Coupling::new(k).expect("finite"));
        match self {
            GridMetric::Shannon => Metric::Shannon,
            GridMetric::Brier => Metric::Brier,
            GridMetric::Decisive => coupled(DECISIVE_KAPPA),
            GridMetric::Robust => coupled(ROBUST_KAPPA),
        }
    }

    /// Brier is a cost and is minimized; the others report an effective
    /// probability and are maximized.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, GridMetric::Brier)
    }
}

impl fmt::Display for GridMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridMetric {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GridMetric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ExperimentError::Config(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub metrics: Vec<GridMetric>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alpha_values: parse_values("-1:2:0.1").expect("valid range"),
            beta_values: parse_values("0:1:0.1").expect("valid range"),
            metrics: GridMetric::ALL.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.alpha_values.is_empty() || self.beta_values.is_empty() || self.metrics.is_empty() {
            return bad("grid needs at least one α, one β and one metric");
        }
        if self.alpha_values.iter().any(|a| !(-5.0..=5.0).contains(a)) {
            return bad("α values must lie in [-5, 5]");
        }
        if self.beta_values.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return bad("β values must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub metric: GridMetric,
    pub mean_score: Cost,
    pub effective_probability: Option<f64>,
    pub misclassified: usize,
}

impl GridCell {
    /// Effective probability, or the mean score for Brier.
    pub fn value(&self) -> f64 {
        self.effective_probability
            .unwrap_or_else(|| self.mean_score.value())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// α-major, then β, then metric in `GridSpec::metrics` order.
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the best cell per metric.
    pub optimal: Vec<(GridMetric, usize)>,
}

impl GridResult {
    pub fn cells_for(&self, metric: GridMetric) -> impl Iterator<Item = (usize, &GridCell)> {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.metric == metric)
    }

    pub fn optimum(&self, metric: GridMetric) -> Option<&GridCell> {
        self.optimal
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|&(_, i)| &self.cells[i])
    }
}

/// Scores every (α, β) cell on every requested metric.
pub fn grid(
    table: &PosteriorTable,
    spec: &GridSpec,
    config: &RunConfig,
) -> Result<GridResult, ExperimentError> {
    spec.validate()?;
    config.validate()?;
    let points: Vec<(f64, f64)> = spec
        .alpha_values
        .iter()
        .flat_map(|&a| spec.beta_values.iter().map(move |&b| (a, b)))
        .collect();
    let per_point: Vec<Vec<GridCell>> = config.pool()?.install(|| {
        points
            .par_iter()
            .map(|&(alpha, beta)| {
                let params = FusionParams::new(alpha, beta)?.with_floor(config.floor)?;
                let eval = evaluate(table, &params)?;
                Ok(spec
                    .metrics
                    .iter()
                    .map(|&metric| {
                        let summary = scoring::summarize(&eval.true_probs, metric.metric());
                        GridCell {
                            alpha,
                            beta,
                            metric,
                            mean_score: summary.mean_score,
                            effective_probability: summary.effective_probability,
                            misclassified: eval.misclassified,
                        }
                    })
                    .collect())
            })
            .collect::<Result<_, ExperimentError>>()
    })?;
    let cells: Vec<GridCell> = per_point.into_iter().flatten().collect();

    let optimal = spec
        .metrics
        .iter()
        .map(|&metric| {
            let mut best: Option<(usize, f64)> = None;
            for (i, cell) in cells.iter().enumerate().filter(|(_, c)| c.metric == metric) {
                let v = cell.value();
                let better = match best {
                    None => true,
                    Some((_, b)) if metric.higher_is_better() => v > b,
                    Some((_, b)) => v < b,
                };
                if better {
                    best = Some((i, v));
                }
            }
            (metric, best.expect("grid is non-empty").0)
        })
        .collect();
    Ok(GridResult { cells, optimal })
}

/// A labelled fusion setting compared in the risk-profile report.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMethod {
    pub name: String,
    pub params: FusionParams,
}

impl FusionMethod {
    pub fn preset(p: Preset) -> Self {
        FusionMethod {
            name: p.name().to_string(),
            params: fusion::preset(p),
        }
    }

    pub fn alpha_beta(alpha: f64, beta: f64) -> Result<Self, ExperimentError> {
        Ok(FusionMethod {
            name: "alpha_beta".to_string(),
            params: FusionParams::new(alpha, beta)?,
        })
    }
}

/// Naive Bayes, log-average, average and the given alpha-beta point.
pub fn standard_methods(alpha: f64, beta: f64) -> Result<Vec<FusionMethod>, ExperimentError> {
    let mut methods: Vec<FusionMethod> =
        Preset::ALL.into_iter().map(FusionMethod::preset).collect();
    methods.push(FusionMethod::alpha_beta(alpha, beta)?);
    Ok(methods)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub method: String,
    /// `bins + 1` edges on [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Counts values into `bins` equal bins on [0, 1]; 1.0 lands in the last bin.
pub fn histogram(method: &str, values: &[f64], bins: usize) -> Histogram {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        method: method.to_string(),
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodProfile {
    pub method: String,
    pub profile: RiskProfile,
    pub histogram: Histogram,
    pub misclassified: usize,
}

/// Risk profile and true-class histogram of each method.
pub fn risk_profiles(
    table: &PosteriorTable,
    methods: &[FusionMethod],
    bins: usize,
    config: &RunConfig,
) -> Result<Vec<MethodProfile>, ExperimentError> {
    config.validate()?;
    if bins == 0 {
        return Err(ExperimentError::Config(
            "histogram needs at least one bin".into(),
        ));
    }
    config.pool()?.install(|| {
        methods
            .par_iter()
            .map(|m| {
                let params = m.params.clone().with_floor(config.floor)?;
                let eval = evaluate(table, &params)?;
                Ok(MethodProfile {
                    method: m.name.clone(),
                    profile: risk_profile(&eval.true_probs, &config.kappa_grid)?,
                    histogram: histogram(&m.name, eval.true_probs.as_slice(), bins),
                    misclassified: eval.misclassified,
                })
            })
            .collect()
    })
}

/// Shortest round-trip form, switching to an exponent below 1e-4.
fn float_field(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| output_err(path, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| output_err(path, e))
}

fn output_err(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), ExperimentError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| output_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

pub fn write_single_sets(
    out_dir: &Path,
    results: &[SingleSetResult],
) -> Result<PathBuf, ExperimentError> {
    let path = out_dir.join("single_sets.csv");
    write_rows(
        &path,
        &["set_name", "dim", "misclassified"],
        results.iter().map(|r| {
            [
                r.kind.name().to_string(),
                r.dim.to_string(),
                r.misclassified.to_string(),
            ]
        }),
    )?;
    Ok(path)
}

pub fn write_alpha_sweep(out_dir: &Path, sweep: &[SweepPoint]) -> Result<PathBuf, ExperimentError> {
    let path = out_dir.join("alpha_sweep.csv");
    write_rows(
        &path,
        &["alpha", "misclassified"],
        sweep
            .iter()
            .map(|p| [p.alpha.to_string(), p.misclassified.to_string()]),
    )?;
    Ok(path)
}

/// One `grid_<metric>.csv` per metric.
pub fn write_grid(out_dir: &Path, result: &GridResult) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut paths = Vec::new();
    for &(metric, best) in &result.optimal {
        let path = out_dir.join(format!("grid_{}.csv", metric.name()));
        write_rows(
            &path,
            &["alpha", "beta", "value", "misclassified", "is_optimal"],
            result.cells_for(metric).map(|(i, c)| {
                [
                    c.alpha.to_string(),
                    c.beta.to_string(),
                    float_field(c.value()),
                    c.misclassified.to_string(),
                    u8::from(i == best).to_string(),
                ]
            }),
        )?;
        paths.push(path);
    }
    Ok(paths)
}

/// `risk_profile.csv` and `histogram.csv`.
pub fn write_risk_profiles(
    out_dir: &Path,
    profiles: &[MethodProfile],
) -> Result<Vec<PathBuf>, ExperimentError> {
    let profile_path = out_dir.join("risk_profile.csv");
    write_rows(
        &profile_path,
        &["method", "kappa", "p_eff"],
        profiles.iter().flat_map(|m| {
            m.profile
                .iter()
                .map(move |(k, p)| [m.method.clone(), k.to_string(), float_field(p)])
        }),
    )?;
    let hist_path = out_dir.join("histogram.csv");
    write_rows(
        &hist_path,
        &["method", "bin_lo", "bin_hi", "count"],
        profiles.iter().flat_map(|m| {
            let h = &m.histogram;
            h.counts.iter().enumerate().map(move |(i, c)| {
                [
                    h.method.clone(),
                    h.edges[i].to_string(),
                    h.edges[i + 1].to_string(),
                    c.to_string(),
                ]
            })
        }),
    )?;
    Ok(vec![profile_path, hist_path])
}
