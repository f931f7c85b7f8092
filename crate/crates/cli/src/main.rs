mod config;
mod error;
mod pipeline;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proxforest::mds::MdsMethod;
use proxforest::ProximityKind;

use config::{parse_depth, DatasetConfig, ProximityScope, RunConfig};
use error::{CliError, Result};
use pipeline::Run;

/// Random-forest proximities, class-wise outlier scores and MDS embeddings
/// for tabular data.
#[derive(Parser)]
#[command(name = "proxforest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset, returns panel, benchmarks and ground truth.
    Synth(Common),
    /// Stratified split, optional grid search, fit, evaluate on the test part.
    Train(TrainArgs),
    /// Compute the proximity matrix of the trained model.
    Score(ScoreArgs),
    /// Class-wise outlier measures, flags, quartiles and novelty profiles.
    Outliers(OutlierArgs),
    /// 2-D embedding of 1 - proximity.
    Mds(MdsArgs),
    /// Regress returns on class benchmarks by outlier quartile.
    Analyze(AnalyzeArgs),
    /// Consolidate a run directory into manifest.json.
    Report(Common),
    /// synth (when synthetic), train, score, outliers, mds, analyze (when a
    /// returns panel exists) and report.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV, replacing any `[dataset]` or `[synthetic]` table.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column of `--data`.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Clone, Default)]
struct ForestArgs {
    #[arg(long)]
    trees: Option<usize>,
    /// Integer or `none`.
    #[arg(long, value_parser = |s: &str| parse_depth(s).map(Depth))]
    max_depth: Option<Depth>,
    /// Ignore any `[grid]` table and fit the `[forest]` parameters directly.
    #[arg(long)]
    no_grid: bool,
}

#[derive(Clone, Copy)]
struct Depth(Option<usize>);

#[derive(Args, Clone, Default)]
struct ProximityArgs {
    #[arg(long, value_enum)]
    proximity: Option<KindArg>,
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    /// Trained model, when not `model.json` in the output directory.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct FlagArgs {
    /// Threshold multiplier; `inf` disables flagging.
    #[arg(long)]
    k_sigma: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    forest: ForestArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    prox: ProximityArgs,
    /// Also write `proximity.csv` with pairs at or above this value.
    #[arg(long)]
    csv_cutoff: Option<f64>,
}

#[derive(Args)]
struct OutlierArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    prox: ProximityArgs,
    #[command(flatten)]
    flag: FlagArgs,
}

#[derive(Args)]
struct MdsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    prox: ProximityArgs,
    #[command(flatten)]
    flag: FlagArgs,
    /// Comma-separated class names to embed.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// `record_id,period,return`
    #[arg(long)]
    returns: Option<PathBuf>,
    /// `class,period,return`
    #[arg(long)]
    benchmarks: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    forest: ForestArgs,
    #[command(flatten)]
    prox: ProximityArgs,
    #[command(flatten)]
    flag: FlagArgs,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Original,
    Oob,
    Gap,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScopeArg {
    Full,
    Train,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Smacof,
    Classical,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(path) = &self.data {
            let label = self.label.clone().or_else(|| cfg.dataset.as_ref().map(|d| d.label.clone()));
            cfg.dataset = Some(DatasetConfig {
                path: path.clone(),
                label: label.unwrap_or_else(|| "class".into()),
                categorical: Vec::new(),
            });
            cfg.synthetic = None;
        } else if let Some(label) = &self.label {
            match cfg.dataset.as_mut() {
                Some(d) => d.label = label.clone(),
                None => return Err(CliError::Config("--label needs a dataset".into())),
            }
        }
        Ok(cfg)
    }
}

impl ForestArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.trees {
            cfg.forest.n_trees = t;
        }
        if let Some(Depth(d)) = self.max_depth {
            cfg.forest.max_depth = d;
        }
        if self.no_grid {
            cfg.grid = None;
        }
    }
}

impl ProximityArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.proximity {
            cfg.proximity.kind = match k {
                KindArg::Original => ProximityKind::Original,
                KindArg::Oob => ProximityKind::Oob,
                KindArg::Gap => ProximityKind::Gap,
            };
        }
        if let Some(s) = self.scope {
            cfg.proximity.scope = match s {
                ScopeArg::Full => ProximityScope::Full,
                ScopeArg::Train => ProximityScope::Train,
            };
        }
    }
}

impl FlagArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.k_sigma {
            cfg.outliers.k_sigma = k;
        }
    }
}

fn open_run(cfg: RunConfig, model: Option<PathBuf>) -> Result<Run> {
    let out = cfg.output_dir();
    Run::new(cfg, out, model)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => open_run(c.config()?, None)?.synth(),
        Command::Train(a) => {
            let mut cfg = a.common.config()?;
            a.forest.apply(&mut cfg);
            open_run(cfg, None)?.train()
        }
        Command::Score(a) => {
            let mut cfg = a.common.config()?;
            a.prox.apply(&mut cfg);
            open_run(cfg, a.prox.model.clone())?.score(a.csv_cutoff)
        }
        Command::Outliers(a) => {
            let mut cfg = a.common.config()?;
            a.prox.apply(&mut cfg);
            a.flag.apply(&mut cfg);
            open_run(cfg, a.prox.model.clone())?.outliers()
        }
        Command::Mds(a) => {
            let mut cfg = a.common.config()?;
            a.prox.apply(&mut cfg);
            a.flag.apply(&mut cfg);
            if let Some(classes) = a.classes {
                cfg.mds.classes = classes;
            }
            if let Some(m) = a.method {
                cfg.mds.method = match m {
                    MethodArg::Smacof => MdsMethod::Smacof,
                    MethodArg::Classical => MdsMethod::Classical,
                };
            }
            open_run(cfg, a.prox.model.clone())?.mds()
        }
        Command::Analyze(a) => {
            let mut cfg = a.common.config()?;
            if a.returns.is_some() {
                cfg.analysis.returns = a.returns;
            }
            if a.benchmarks.is_some() {
                cfg.analysis.benchmarks = a.benchmarks;
            }
            open_run(cfg, None)?.analyze()
        }
        Command::Report(c) => open_run(c.config()?, None)?.report(),
        Command::Run(a) => {
            let mut cfg = a.common.config()?;
            a.forest.apply(&mut cfg);
            a.prox.apply(&mut cfg);
            a.flag.apply(&mut cfg);
            open_run(cfg, a.prox.model.clone())?.run_all()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
