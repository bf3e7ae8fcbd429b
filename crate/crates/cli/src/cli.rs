//! Argument parsing and dispatch for the `knockoffs` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use knockoff_core::{StatKind, ThresholdRule};

use crate::config::{single_cell, Overrides, RunConfig, Setting};
use crate::error::{CliError, Result};
use crate::select::{run_select, SelectOptions};
use crate::simulate::{run_diagnose, run_simulate};

#[derive(Debug, Parser)]
#[command(
    name = "knockoffs",
    version,
    about = "Approximate model-X knockoffs: simulation, selection, diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulation cells and report FDR and power.
    Simulate(GridArgs),
    /// Select variables in a CSV dataset.
    Select(SelectArgs),
    /// Run simulation cells and evaluate the null-statistic diagnostics.
    Diagnose(GridArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatArg {
    Mc,
    Ols,
    Dl,
    Dc,
}

impl From<StatArg> for StatKind {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Mc => StatKind::MarginalCorr,
            StatArg::Ols => StatKind::OlsDiff,
            StatArg::Dl => StatKind::DebiasedLassoDiff,
            StatArg::Dc => StatKind::DistanceCorr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Knockoff,
    KnockoffPlus,
}

impl From<RuleArg> for ThresholdRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Knockoff => ThresholdRule::Knockoff,
            RuleArg::KnockoffPlus => ThresholdRule::KnockoffPlus,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// JSON file with `cells` and `output_dir`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stat: Option<StatArg>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// 1 (linear), 2 (tanh) or null.
    #[arg(long)]
    pub setting: Option<Setting>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    /// CSV with a header row; a `y` column is the response.
    #[arg(long)]
    pub data: PathBuf,
    /// Names of the relevant columns, comma or whitespace separated.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mc")]
    pub stat: StatArg,
    #[arg(long, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, value_enum, default_value = "knockoff")]
    pub rule: RuleArg,
    /// Binary mutation panel: drop rare columns after dropping rows with a
    /// missing response.
    #[arg(long)]
    pub panel: bool,
    #[arg(long, default_value_t = 3)]
    pub min_count: usize,
    /// Rows drawn without replacement in each replication.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Ridge added to the estimated covariance.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "knockoff-out")]
    pub out: PathBuf,
}

const DEFAULT_OUT: &str = "knockoff-out";

impl GridArgs {
    /// The run configuration these flags describe, with overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let overrides = Overrides {
            statistic: self.stat.map(Into::into),
            q: self.q,
            replications: self.reps,
            seed: self.seed,
            rule: self.rule.map(Into::into),
        };
        let mut cfg = match &self.config {
            Some(path) => {
                if self.n.is_some()
                    || self.p.is_some()
                    || self.rho.is_some()
                    || self.setting.is_some()
                {
                    return Err(CliError::Config(
                        "--n, --p, --rho and --setting cannot be combined with --config".into(),
                    ));
                }
                RunConfig::load(path)?
            }
            None => {
                let (n, p) = match (self.n, self.p) {
                    (Some(n), Some(p)) => (n, p),
                    _ => {
                        return Err(CliError::Config(
                            "either --config or both --n and --p are required".into(),
                        ))
                    }
                };
                let cell = single_cell(
                    n,
                    p,
                    self.rho.unwrap_or(0.0),
                    self.setting.unwrap_or(Setting::Linear),
                )?;
                RunConfig {
                    cells: vec![cell],
                    output_dir: None,
                    diagnostics: Default::default(),
                }
            }
        };
        cfg.apply(&overrides)?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

impl SelectArgs {
    pub fn options(&self) -> SelectOptions {
        SelectOptions {
            truth: self.truth.clone(),
            statistic: self.stat.into(),
            q: self.q,
            rule: self.rule.into(),
            panel: self.panel,
            min_count: self.min_count,
            subsample: self.subsample,
            replications: self.reps,
            seed: self.seed,
            ridge: self.ridge,
            ..SelectOptions::new(&self.data)
        }
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?
            .install(f),
    }
}

/// Executes a parsed command and returns the paths it wrote, one per line.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.run_config()?;
            let report = with_threads(args.threads, || run_simulate(&cfg))?;
            let w = report.write(&args.out_dir(&cfg))?;
            Ok(format!("{}\n{}", w.json.display(), w.csv.display()))
        }
        Command::Diagnose(args) => {
            let cfg = args.run_config()?;
            let report = with_threads(args.threads, || run_diagnose(&cfg))?;
            let w = report.write(&args.out_dir(&cfg))?;
            Ok(format!("{}\n{}", w.json.display(), w.csv.display()))
        }
        Command::Select(args) => {
            let opts = args.options();
            let report = with_threads(args.threads, || run_select(&opts))?;
            let w = report.write(&args.out)?;
            Ok(format!("{}\n{}", w.json.display(), w.csv.display()))
        }
    }
}
