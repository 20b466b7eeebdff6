//! `transdist`: generate data, train models, and run nearest-neighbour
//! experiments with the transforming distance.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transdist::knn::EvalMode;

use crate::artifacts::{Layout, RunLog};
use crate::commands::{Ctx, SweepAxis};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "transdist", version, about = "Transforming-distance nearest-neighbour experiments")]
struct Cli {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sets every seed in the config (data, split, feature and fgRBM
    /// training, evaluation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override `section.key=value`; the value is parsed as JSON
    /// when possible. Repeatable, applied after `--seed`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic dataset into out/data/raw.
    Gen,
    /// Normalize and split the raw dataset into out/data/lcn.
    Preprocess,
    /// Fit the configured feature space (PCA or CAE).
    TrainFeatures,
    /// Train the fgRBM on same-identity pairs.
    TrainFgrbm,
    /// Select the feature space and the fgRBM size on the validation split.
    Crossval,
    /// KNN accuracy on the test split.
    Eval {
        /// Modes to evaluate; defaults to eval.modes.
        #[arg(long = "mode", value_parser = parse_mode)]
        modes: Vec<EvalMode>,
    },
    /// Write the model-augmented database to out/data/augmented.
    Augment,
    /// Accuracy over the K grid or the missing-rate grid.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
    },
    /// Render the optimization of one pair as a PGM strip.
    VizStrip {
        /// Dataset row of the transformed image.
        #[arg(long, requires = "target")]
        source: Option<usize>,
        /// Dataset row of the target image.
        #[arg(long, requires = "source")]
        target: Option<usize>,
        /// Intermediate panels between the source and the best transform.
        #[arg(long, default_value_t = 4)]
        frames: usize,
    },
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Preprocess => "preprocess",
            Command::TrainFeatures => "train-features",
            Command::TrainFgrbm => "train-fgrbm",
            Command::Crossval => "crossval",
            Command::Eval { .. } => "eval",
            Command::Augment => "augment",
            Command::Sweep { .. } => "sweep",
            Command::VizStrip { .. } => "viz-strip",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    for spec in &cli.overrides {
        cfg.apply_override(spec)?;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    cfg.validate()?;
    if let Some(dir) = &cfg.data.dir {
        if !dir.is_dir() {
            return Err(CliError::missing("dataset directory", dir.clone(), "data.dir must exist"));
        }
    }

    let layout = Layout::new(cfg.out.clone());
    let log = RunLog::start(cli.command.name(), &cfg);
    let mut ctx = Ctx { cfg, layout, log };
    let lines = match &cli.command {
        Command::Gen => commands::gen(&mut ctx)?,
        Command::Preprocess => commands::preprocess_cmd(&mut ctx)?,
        Command::TrainFeatures => commands::train_features(&mut ctx)?,
        Command::TrainFgrbm => commands::train_fgrbm(&mut ctx)?,
        Command::Crossval => commands::crossval(&mut ctx)?,
        Command::Eval { modes } => commands::eval(&mut ctx, modes)?,
        Command::Augment => commands::augment(&mut ctx)?,
        Command::Sweep { axis } => commands::sweep(&mut ctx, *axis)?,
        Command::VizStrip { source, target, frames } => {
            commands::viz_strip(&mut ctx, source.zip(*target), *frames)?
        }
    };
    for line in lines {
        println!("{line}");
    }
    let Ctx { cfg, layout, log } = ctx;
    let path = log.finish(&layout, &cfg, cli.seed)?;
    println!("run log: {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
