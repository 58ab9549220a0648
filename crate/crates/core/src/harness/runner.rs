//! Run orchestration and the run-directory layout.
//!
//! Every training run directory contains:
//!
//! ```text
//! config.resolved.txt      full resolved config, re-parseable
//! metrics.csv              one row per training step
//! eval.csv                 row at step 0 (base), any interval rows, final row
//! checkpoints/step_NNNNNN.json, checkpoints/final.json
//! base.json                pretrained base (inline-pretrain runs only)
//! ```
//!
//! Resuming appends to the interrupted run's files after trimming them back
//! to the checkpoint step, so a resumed run's outputs are byte-identical to
//! an uninterrupted one.

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::config::RunConfig;
use crate::harness::metrics::{
    format_eval_row, format_step_record, CsvWriter, EVAL_HEADER, METRICS_HEADER,
};
use crate::policy::PolicyParams;
use crate::task::Problem;
use crate::trainer::{self, PretrainReport, StepRecord, TrainObserver, TrainState};
use std::path::{Path, PathBuf};

/// Where the starting parameters of an RL run come from.
pub enum BaseSource<'a> {
    /// Pretrain the verbose base inline and save it as `base.json`.
    PretrainInline,
    /// Take parameters (only) from a checkpoint file.
    BaseFile(&'a Path),
    /// Take parameters (only) from memory.
    Params(&'a PolicyParams),
    /// Continue a previous run of the same directory from its checkpoint.
    Resume(&'a Path),
}

#[derive(Debug)]
pub struct RunOutput {
    pub run_dir: PathBuf,
    pub records: Vec<StepRecord>,
    pub final_state: TrainState,
    /// Evaluation of the starting parameters; absent on resume.
    pub base_eval: Option<EvalReport>,
    pub final_eval: EvalReport,
    pub acc_ref: f64,
    pub pretrain_report: Option<PretrainReport>,
}

struct RunObserver<'a> {
    metrics: CsvWriter,
    evals: CsvWriter,
    ckpt_dir: PathBuf,
    cfg: &'a RunConfig,
    problems: &'a [Problem],
}

impl TrainObserver for RunObserver<'_> {
    fn on_step(&mut self, state: &TrainState, record: &StepRecord) -> Result<()> {
        self.metrics.write_line(&format_step_record(record))?;
        if self.cfg.eval_interval > 0
            && record.step % self.cfg.eval_interval == 0
            && record.step < self.cfg.total_steps
        {
            let report = evaluate(
                &state.params,
                self.problems,
                self.cfg.eval_samples_per_problem,
                &self.cfg.sample_eval,
                self.cfg.eval_seed(),
                self.cfg.threads,
            )?;
            self.evals.write_line(&format_eval_row(record.step, &report))?;
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> Result<()> {
        let path = self
            .ckpt_dir
            .join(format!("step_{:06}.json", state.next_step - 1));
        save_checkpoint(&path, state, self.cfg.seed)
    }
}

/// Keep only CSV rows whose step passes `keep`, preserving the bytes of the
/// survivors, so a resumed run's files continue exactly where an
/// uninterrupted run would be.
fn trim_csv(path: &Path, keep: impl Fn(usize) -> bool) -> Result<()> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            kept.push_str(line);
            kept.push('\n');
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let step: usize = line
            .split(',')
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::CsvFormat {
                path: path.display().to_string(),
                row: i + 1,
                column: "step".to_string(),
                detail: "cannot parse step while trimming for resume".to_string(),
            })?;
        if keep(step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Pretrain the verbose base and persist it as a step-0 checkpoint.
pub fn run_pretrain(cfg: &RunConfig, out_dir: &Path) -> Result<(PolicyParams, PretrainReport, PathBuf)> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    std::fs::write(out_dir.join("config.resolved.txt"), cfg.dump())
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let (params, report) = trainer::pretrain(&cfg.pretrain_config())?;
    let state = TrainState::new(params.clone(), &cfg.train_config())?;
    let base_path = out_dir.join("base.json");
    save_checkpoint(&base_path, &state, cfg.seed)?;
    let summary = format!(
        "holdout_accuracy = {}\nholdout_mean_len = {}\nsteps_run = {}\nfinal_mean_ce = {}\n",
        report.holdout_accuracy, report.holdout_mean_len, report.steps_run, report.final_mean_ce
    );
    std::fs::write(out_dir.join("pretrain_report.txt"), summary)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok((params, report, base_path))
}

/// Execute a full RL run into `out_dir`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path, base: BaseSource) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(ckpt_dir.display().to_string(), e))?;
    std::fs::write(out_dir.join("config.resolved.txt"), cfg.dump())
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let problems = cfg.eval_problem_set()?;
    let train_cfg = cfg.train_config();
    let metrics_path = out_dir.join("metrics.csv");
    let eval_path = out_dir.join("eval.csv");

    let mut pretrain_report = None;
    let (mut state, base_params, metrics, evals, resumed) = match base {
        BaseSource::PretrainInline => {
            let (params, report, _) = run_pretrain(cfg, out_dir)?;
            pretrain_report = Some(report);
            let state = TrainState::new(params.clone(), &train_cfg)?;
            let metrics = CsvWriter::create(&metrics_path, METRICS_HEADER)?;
            let evals = CsvWriter::create(&eval_path, EVAL_HEADER)?;
            (state, Some(params), metrics, evals, false)
        }
        BaseSource::BaseFile(path) => {
            let (loaded, _) = load_checkpoint(path)?;
            let params = loaded.params;
            let state = TrainState::new(params.clone(), &train_cfg)?;
            let metrics = CsvWriter::create(&metrics_path, METRICS_HEADER)?;
            let evals = CsvWriter::create(&eval_path, EVAL_HEADER)?;
            (state, Some(params), metrics, evals, false)
        }
        BaseSource::Params(params) => {
            let state = TrainState::new(params.clone(), &train_cfg)?;
            let metrics = CsvWriter::create(&metrics_path, METRICS_HEADER)?;
            let evals = CsvWriter::create(&eval_path, EVAL_HEADER)?;
            (state, Some(params.clone()), metrics, evals, false)
        }
        BaseSource::Resume(path) => {
            let (state, root_seed) = load_checkpoint(path)?;
            if root_seed != cfg.seed {
                return Err(Error::validation(format!(
                    "checkpoint root seed {root_seed} does not match config seed {}; \
                     resuming would change every derived stream",
                    cfg.seed
                )));
            }
            if cfg.kl_coef > 0.0 {
                return Err(Error::validation(
                    "resume with kl_coef > 0 is unsupported: the base policy for the KL \
                     term is not stored in checkpoints",
                ));
            }
            let done = state.next_step - 1;
            trim_csv(&metrics_path, |step| step <= done)?;
            // Keep exactly the eval rows an uninterrupted run would have by
            // now: the base row plus interval rows (a stray final row from
            // the interrupted run is not one of them).
            let interval = cfg.eval_interval;
            let total = cfg.total_steps;
            trim_csv(&eval_path, |step| {
                step == 0
                    || (interval > 0 && step % interval == 0 && step <= done && step < total)
            })?;
            let metrics = CsvWriter::append(&metrics_path)?;
            let evals = CsvWriter::append(&eval_path)?;
            (state, None, metrics, evals, true)
        }
    };

    let mut observer = RunObserver {
        metrics,
        evals,
        ckpt_dir: ckpt_dir.clone(),
        cfg,
        problems: &problems,
    };

    // Base evaluation (step 0 row) before any training.
    let base_eval = if resumed {
        None
    } else {
        let params = base_params.as_ref().expect("fresh runs carry base params");
        let report = evaluate(
            params,
            &problems,
            cfg.eval_samples_per_problem,
            &cfg.sample_eval,
            cfg.eval_seed(),
            cfg.threads,
        )?;
        observer.evals.write_line(&format_eval_row(0, &report))?;
        Some(report)
    };

    let ref_policy = if cfg.kl_coef > 0.0 {
        base_params.clone()
    } else {
        None
    };
    let records = trainer::train(&mut state, &train_cfg, ref_policy.as_ref(), &mut observer)?;

    save_checkpoint(&ckpt_dir.join("final.json"), &state, cfg.seed)?;
    let final_eval = evaluate(
        &state.params,
        &problems,
        cfg.eval_samples_per_problem,
        &cfg.sample_eval,
        cfg.eval_seed(),
        cfg.threads,
    )?;
    observer
        .evals
        .write_line(&format_eval_row(cfg.total_steps, &final_eval))?;

    Ok(RunOutput {
        run_dir: out_dir.to_path_buf(),
        acc_ref: state.controller.acc_ref(),
        records,
        base_eval,
        final_eval,
        final_state: state,
        pretrain_report,
    })
}

/// Evaluate a checkpoint's parameters on the config's held-out set.
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let (state, _) = load_checkpoint(checkpoint)?;
    let problems = cfg.eval_problem_set()?;
    evaluate(
        &state.params,
        &problems,
        cfg.eval_samples_per_problem,
        &cfg.sample_eval,
        cfg.eval_seed(),
        cfg.threads,
    )
}
