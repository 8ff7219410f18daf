use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use riskfuse::classifier::Ridge;
use riskfuse::dataset::{FeatureKind, SplitSpec, DEFAULT_BASE_URL};
use riskfuse::experiment::{
    self, parse_values, ExperimentError, FusionMethod, GridMetric, GridSpec, PosteriorTable,
    RunConfig, SingleSetResult, DEFAULT_BINS, REFERENCE_ALPHA_BETA,
};
use riskfuse::fusion::{Preset, DEFAULT_FLOOR};

/// Alpha-beta fusion of the six mfeat classifiers, scored with coupled
/// surprisal risk profiles.
#[derive(Debug, Parser)]
#[command(name = "riskfuse", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Directory holding the mfeat files and their index.
    #[arg(
        long,
        global = true,
        env = "RISKFUSE_CACHE_DIR",
        default_value = "data/mfeat"
    )]
    cache_dir: PathBuf,
    /// Where missing mfeat files are downloaded from (http(s)://, file:// or a path).
    #[arg(long, global = true, default_value = DEFAULT_BASE_URL)]
    base_url: String,
    /// Train/test split: `first` or `seeded:<n>`.
    #[arg(long, global = true, default_value = "first", value_parser = parse_split)]
    split: SplitSpec,
    /// Covariance ridge: an absolute value or `rel:<x>` (times trace/d).
    #[arg(long, global = true, default_value = "rel:1e-6")]
    ridge: Ridge,
    /// Probability floor applied before fusion, in (0, 1e-3].
    #[arg(long, global = true, default_value_t = DEFAULT_FLOOR)]
    floor: f64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch and validate the six feature files and print their shapes.
    Ingest,
    /// Test misclassifications of one classifier per feature set.
    SingleSets,
    /// Misclassifications of the fused posterior against α, with β = 0.
    AlphaSweep {
        /// α values as lo:hi:step or a comma list.
        #[arg(long, default_value = "-1:2:0.05", allow_hyphen_values = true)]
        alpha: String,
        /// Fuse only these sets (repeatable); a single set reproduces its own count.
        #[arg(long = "only", value_parser = parse_kind)]
        only: Vec<FeatureKind>,
    },
    /// Score every (α, β) cell and mark the best cell per metric.
    Grid {
        #[arg(long, default_value = "-1:2:0.1", allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, default_value = "0:1:0.1")]
        beta: String,
        /// Comma list from shannon, brier, decisive, robust.
        #[arg(long, default_value = "shannon,brier,decisive,robust")]
        metrics: String,
    },
    /// Effective probability against κ and true-class histograms per method.
    RiskProfiles {
        /// Comma list from naive_bayes, log_average, average, alpha_beta.
        #[arg(long, default_value = "naive_bayes,log_average,average,alpha_beta")]
        methods: String,
        /// α and β of the alpha_beta method.
        #[arg(long, num_args = 2, value_names = ["ALPHA", "BETA"], allow_hyphen_values = true)]
        alpha_beta: Option<Vec<f64>>,
        #[arg(long, default_value = "-1:1:0.05", allow_hyphen_values = true)]
        kappa: String,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
}

fn parse_split(s: &str) -> Result<SplitSpec, String> {
    s.parse()
        .map_err(|e: riskfuse::dataset::DataError| e.to_string())
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse()
        .map_err(|e: riskfuse::dataset::DataError| e.to_string())
}

fn config(g: &Global) -> RunConfig {
    RunConfig {
        cache_dir: g.cache_dir.clone(),
        base_url: g.base_url.clone(),
        split: g.split,
        ridge: g.ridge,
        floor: g.floor,
        out_dir: g.out_dir.clone(),
        workers: g
            .workers
            .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get())),
        ..RunConfig::default()
    }
}

fn trained(cfg: &RunConfig) -> Result<(Vec<SingleSetResult>, PosteriorTable), ExperimentError> {
    let sets = experiment::ingest(cfg)?;
    experiment::train_and_score(&sets, cfg)
}

fn wrote(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    let mut cfg = config(&cli.global);
    cfg.validate()?;
    let out: &Path = &cfg.out_dir.clone();
    match cli.command {
        Command::Ingest => {
            let sets = experiment::ingest(&cfg)?;
            println!("{:<10} {:>5} {:>6}", "name", "dim", "rows");
            for s in &sets {
                println!("{:<10} {:>5} {:>6}", s.kind.name(), s.dim(), s.rows());
            }
        }
        Command::SingleSets => {
            let (singles, _) = trained(&cfg)?;
            println!("{:<10} {:>5} {:>13}", "set_name", "dim", "misclassified");
            for s in &singles {
                println!("{:<10} {:>5} {:>13}", s.kind.name(), s.dim, s.misclassified);
            }
            wrote(&[experiment::write_single_sets(out, &singles)?]);
        }
        Command::AlphaSweep { alpha, only } => {
            let alphas = parse_values(&alpha)?;
            let (_, mut table) = trained(&cfg)?;
            if !only.is_empty() {
                table = table.restrict(&only);
            }
            let sweep = experiment::alpha_sweep(&table, &alphas, &cfg)?;
            let best = sweep
                .iter()
                .min_by_key(|p| p.misclassified)
                .expect("non-empty");
            println!(
                "minimum {} misclassified at α = {} ({} sources)",
                best.misclassified,
                best.alpha,
                table.sources.len()
            );
            wrote(&[experiment::write_alpha_sweep(out, &sweep)?]);
        }
        Command::Grid {
            alpha,
            beta,
            metrics,
        } => {
            let spec = GridSpec {
                alpha_values: parse_values(&alpha)?,
                beta_values: parse_values(&beta)?,
                metrics: metrics
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<GridMetric>, _>>()?,
            };
            spec.validate()?;
            let (_, table) = trained(&cfg)?;
            let result = experiment::grid(&table, &spec, &cfg)?;
            for &(metric, i) in &result.optimal {
                let c = &result.cells[i];
                println!(
                    "{:<9} optimum α = {}, β = {}: value {:.6}, {} misclassified",
                    metric.name(),
                    c.alpha,
                    c.beta,
                    c.value(),
                    c.misclassified
                );
            }
            wrote(&experiment::write_grid(out, &result)?);
        }
        Command::RiskProfiles {
            methods,
            alpha_beta,
            kappa,
            bins,
        } => {
            cfg.kappa_grid = parse_values(&kappa)?;
            let (a, b) = match alpha_beta.as_deref() {
                Some([a, b]) => (*a, *b),
                _ => REFERENCE_ALPHA_BETA,
            };
            let methods = methods
                .split(',')
                .map(|name| match name.trim() {
                    "alpha_beta" => FusionMethod::alpha_beta(a, b),
                    other => Preset::ALL
                        .into_iter()
                        .find(|p| p.name() == other)
                        .map(FusionMethod::preset)
                        .ok_or_else(|| {
                            ExperimentError::Config(format!("unknown method '{other}'"))
                        }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (_, table) = trained(&cfg)?;
            let profiles = experiment::risk_profiles(&table, &methods, bins, &cfg)?;
            for m in &profiles {
                let at = |k: f64| {
                    m.profile
                        .at(k)
                        .map_or("-".to_string(), |p| format!("{p:.4}"))
                };
                println!(
                    "{:<12} P_eff κ=-0.5 {}  κ=0 {}  κ=0.5 {}  ({} misclassified)",
                    m.method,
                    at(-0.5),
                    at(0.0),
                    at(0.5),
                    m.misclassified
                );
            }
            wrote(&experiment::write_risk_profiles(out, &profiles)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
