//! Config-driven experiment runner. Each subcommand writes
//! `<out>/<subcommand>/<label>/report.csv` together with the resolved
//! config and a figure manifest.

pub mod classify;
pub mod config;
pub mod lambda_map;
pub mod method_compare;
pub mod rank_sweep;
pub mod report;
pub mod synthetic;
pub mod theory_vs_mc;
pub mod uci_bench;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::report::Report;

#[derive(Debug, Parser)]
#[command(name = "cpcr", version, about = "Calibrated PCR experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random-matrix risk against Monte Carlo over a (c, kappa) grid.
    TheoryVsMc(CommonArgs),
    /// CPCR, PCR and ridge over a kappa or spectrum sweep.
    MethodCompare(CommonArgs),
    /// Risk versus the number of retained components.
    RankSweep(CommonArgs),
    /// Normalized theoretical risk over (kappa, lambda).
    LambdaMap(CommonArgs),
    /// Regression benchmark on CSV datasets.
    UciBench(CommonArgs),
    /// Classification on embeddings with label noise.
    Classify(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TheoryVsMc(_) => "theory-vs-mc",
            Command::MethodCompare(_) => "method-compare",
            Command::RankSweep(_) => "rank-sweep",
            Command::LambdaMap(_) => "lambda-map",
            Command::UciBench(_) => "uci-bench",
            Command::Classify(_) => "classify",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::TheoryVsMc(a)
            | Command::MethodCompare(a)
            | Command::RankSweep(a)
            | Command::LambdaMap(a)
            | Command::UciBench(a)
            | Command::Classify(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok { report: PathBuf },
    /// Some rows have `status=failed`.
    Partial { report: PathBuf, failures: usize },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Ok { .. } => 0,
            Outcome::Partial { .. } => 2,
        }
    }

    pub fn report(&self) -> &Path {
        match self {
            Outcome::Ok { report } | Outcome::Partial { report, .. } => report,
        }
    }
}

fn execute<C: Serialize>(
    args: &CommonArgs,
    sub: &str,
    label: &str,
    cfg: &C,
    manifest: &str,
    body: impl FnOnce() -> Result<Report> + Send,
) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .context("building worker pool")?;
    let report = pool.install(body)?;
    let dir = args.out.join(sub).join(label);
    let path = report::write_outputs(&dir, &report, cfg, args.seed, manifest)?;
    let failures = report.failures();
    log::info!("{sub}: {} rows, {failures} failed, written to {}", report.rows.len(), path.display());
    Ok(if failures == 0 {
        Outcome::Ok { report: path }
    } else {
        Outcome::Partial { report: path, failures }
    })
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['/', '\\']) || label == "." || label == ".." {
        anyhow::bail!("label {label:?} is not a valid directory name");
    }
    Ok(())
}

/// Runs one subcommand. Errors are configuration or IO failures; failed
/// cells are reported through `Outcome::Partial`.
pub fn run(command: &Command) -> Result<Outcome> {
    let args = command.args();
    let path = args.config.as_deref();
    let seed = args.seed;
    let name = command.name();
    macro_rules! dispatch {
        ($ty:ty, $module:ident) => {{
            let cfg: $ty = config::load(path)?;
            cfg.validate().context("invalid config")?;
            check_label(&cfg.label)?;
            execute(args, name, &cfg.label, &cfg, $module::MANIFEST, || $module::run(&cfg, seed))
        }};
    }
    match command {
        Command::TheoryVsMc(_) => dispatch!(config::TheoryVsMcConfig, theory_vs_mc),
        Command::MethodCompare(_) => dispatch!(config::MethodCompareConfig, method_compare),
        Command::RankSweep(_) => dispatch!(config::RankSweepConfig, rank_sweep),
        Command::LambdaMap(_) => dispatch!(config::LambdaMapConfig, lambda_map),
        Command::UciBench(_) => dispatch!(config::UciBenchConfig, uci_bench),
        Command::Classify(_) => dispatch!(config::ClassifyConfig, classify),
    }
}
