//! `adlp` — pretrain, train, evaluate, sweep, and plot length-penalty runs.

use adlp_core::harness::{
    emit_plots, run_eval, run_pretrain, run_sweep, run_train, Axis, BaseSource, RunConfig,
    SweepSpec,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "adlp",
    about = "Adaptive direct length penalty lab: RL training with an accuracy-steered length penalty",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (dotted keys, one per line); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set controller.eta=1e-3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> adlp_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::parse_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                adlp_core::Error::validation(format!("--set `{kv}` must look like key=value"))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the verbose base policy and write base.json.
    Pretrain {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (defaults to run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run RL training (pretraining the base inline unless --base is given).
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from this checkpoint's parameters instead of pretraining.
        #[arg(long, conflicts_with = "resume")]
        base: Option<PathBuf>,
        /// Continue an interrupted run from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the config's held-out problem set.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run a grid of configs; axes are key[+key2]=v1,v2,... (repeatable).
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "axis", value_name = "KEY=V1,V2,...", required = true)]
        axes: Vec<String>,
        /// Independent seeds per grid cell.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Render SVG charts from metrics CSVs.
    Plot {
        /// Output directory for the chart files.
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV files to overlay.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
}

fn out_dir(cfg: &RunConfig, out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

fn run() -> adlp_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Pretrain { config, out } => {
            let cfg = config.resolve()?;
            let dir = out_dir(&cfg, &out);
            let (_, report, base_path) = run_pretrain(&cfg, &dir)?;
            println!("base checkpoint: {}", base_path.display());
            println!("holdout_accuracy = {}", report.holdout_accuracy);
            println!("holdout_mean_len = {}", report.holdout_mean_len);
        }
        Command::Train {
            config,
            out,
            base,
            resume,
        } => {
            let cfg = config.resolve()?;
            let dir = out_dir(&cfg, &out);
            let source = match (&base, &resume) {
                (Some(b), _) => BaseSource::BaseFile(b),
                (_, Some(r)) => BaseSource::Resume(r),
                _ => BaseSource::PretrainInline,
            };
            let output = run_train(&cfg, &dir, source)?;
            let last = output.records.last().expect("at least one step");
            println!("run directory: {}", output.run_dir.display());
            println!(
                "final step {}: lambda = {}, batch accuracy = {}, mean length = {}",
                last.step, last.lambda, last.acc_train, last.mean_len
            );
            if let Some(base_eval) = &output.base_eval {
                println!(
                    "base eval: accuracy = {}, mean_len = {}",
                    base_eval.accuracy, base_eval.mean_len
                );
            }
            println!(
                "final eval: accuracy = {}, mean_len = {}",
                output.final_eval.accuracy, output.final_eval.mean_len
            );
        }
        Command::Eval { config, checkpoint } => {
            let cfg = config.resolve()?;
            let report = run_eval(&cfg, &checkpoint)?;
            print!("{}", report.to_kv_record());
        }
        Command::Sweep {
            config,
            out,
            axes,
            seeds,
        } => {
            let cfg = config.resolve()?;
            let dir = out_dir(&cfg, &out);
            let axes = axes
                .iter()
                .map(|a| Axis::parse(a))
                .collect::<adlp_core::Result<Vec<_>>>()?;
            let spec = SweepSpec {
                base: cfg,
                axes,
                seeds_per_cell: seeds,
            };
            let summary = run_sweep(&spec, &dir)?;
            let failed = summary
                .cells
                .iter()
                .filter(|c| c.outcome.is_err())
                .count();
            println!("summary: {}", summary.summary_path.display());
            println!("cells: {} ({} failed)", summary.cells.len(), failed);
        }
        Command::Plot { out, metrics } => {
            let written = emit_plots(&metrics, &out)?;
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
