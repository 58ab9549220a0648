//! Run configuration: a flat dotted-key-per-line text format.
//!
//! Every key has a default, so an empty file (or no file) is a complete
//! config. Unknown keys are rejected, and parse or range failures name the
//! offending key. `dump()` emits the resolved snapshot in the same format,
//! so a run directory's `config.resolved.txt` can be fed straight back in.

use crate::error::{Error, Result};
use crate::eval;
use crate::policy::{Dims, SampleConfig};
use crate::reward::{RewardMode, RewardSpec};
use crate::seeding;
use crate::task::{Problem, TaskConfig};
use crate::trainer::{AccRef, ControllerConfig, PretrainConfig, TrainConfig};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub checkpoint_interval: usize,
    /// 1 = strictly serial; 0 = all cores; n = a pool of n workers.
    pub threads: usize,
    pub task: TaskConfig,
    pub d_emb: usize,
    pub d_hid: usize,
    pub pretrain_steps: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_target_accuracy: f64,
    pub pretrain_holdout_problems: usize,
    pub pretrain_curriculum_frac: f64,
    pub reward: RewardSpec,
    pub controller: ControllerConfig,
    pub batch_size: usize,
    pub group_size: usize,
    pub total_steps: usize,
    pub train_lr: f64,
    pub adv_epsilon: f64,
    pub kl_coef: f64,
    pub sample_train: SampleConfig,
    pub sample_eval: SampleConfig,
    pub eval_num_problems: usize,
    pub eval_samples_per_problem: usize,
    /// Evaluate every this many steps (0 = final only).
    pub eval_interval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: "run".to_string(),
            checkpoint_interval: 20,
            threads: 0,
            task: TaskConfig::default(),
            d_emb: 32,
            d_hid: 64,
            pretrain_steps: 3000,
            pretrain_batch_size: 16,
            pretrain_lr: 0.01,
            pretrain_target_accuracy: 0.9,
            pretrain_holdout_problems: 200,
            pretrain_curriculum_frac: 0.5,
            reward: RewardSpec {
                mode: RewardMode::Adaptive,
                lambda_static: 0.0,
            },
            controller: ControllerConfig {
                lambda0: 0.01,
                eta: 0.01,
                acc_ref: AccRef::Auto,
            },
            batch_size: 32,
            group_size: 4,
            total_steps: 400,
            train_lr: 0.01,
            adv_epsilon: 1e-8,
            kl_coef: 0.0,
            sample_train: SampleConfig {
                temperature: 1.0,
                top_p: 1.0,
                max_len: 80,
            },
            sample_eval: SampleConfig {
                temperature: 0.6,
                top_p: 0.95,
                max_len: 80,
            },
            eval_num_problems: 200,
            eval_samples_per_problem: 16,
            eval_interval: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

impl RunConfig {
    /// Parse a config file; missing files are a distinct error.
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse_str(&text)
    }

    /// Parse config text over the defaults.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `key=value` override (also the `--set` mechanism).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run.seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "run.out_dir" => self.out_dir = value.to_string(),
            "run.checkpoint_interval" => {
                self.checkpoint_interval = parse_num(key, value, "an unsigned integer")?
            }
            "run.threads" => self.threads = parse_num(key, value, "an unsigned integer")?,
            "task.n_min" => self.task.n_min = parse_num(key, value, "an unsigned integer")?,
            "task.n_max" => self.task.n_max = parse_num(key, value, "an unsigned integer")?,
            "task.redundancy_min" => {
                self.task.redundancy_min = parse_num(key, value, "an unsigned integer")?
            }
            "task.redundancy_max" => {
                self.task.redundancy_max = parse_num(key, value, "an unsigned integer")?
            }
            "policy.d_emb" => {
                self.d_emb = parse_num(key, value, "an unsigned integer")?;
                if self.d_emb == 0 {
                    return Err(Error::config(key, "must be >= 1"));
                }
            }
            "policy.d_hid" => {
                self.d_hid = parse_num(key, value, "an unsigned integer")?;
                if self.d_hid == 0 {
                    return Err(Error::config(key, "must be >= 1"));
                }
            }
            "pretrain.steps" => self.pretrain_steps = parse_num(key, value, "an unsigned integer")?,
            "pretrain.batch_size" => {
                self.pretrain_batch_size = parse_num(key, value, "an unsigned integer")?
            }
            "pretrain.lr" => {
                self.pretrain_lr = parse_num(key, value, "a number")?;
                if !(self.pretrain_lr.is_finite() && self.pretrain_lr > 0.0) {
                    return Err(Error::config(key, format!("must be > 0, got {value}")));
                }
            }
            "pretrain.target_accuracy" => {
                self.pretrain_target_accuracy = parse_num(key, value, "a number")?;
                if !(0.0..=1.0).contains(&self.pretrain_target_accuracy) {
                    return Err(Error::config(key, format!("must lie in [0, 1], got {value}")));
                }
            }
            "pretrain.holdout_problems" => {
                self.pretrain_holdout_problems = parse_num(key, value, "an unsigned integer")?
            }
            "pretrain.curriculum_frac" => {
                self.pretrain_curriculum_frac = parse_num(key, value, "a number")?;
                if !(0.0..=1.0).contains(&self.pretrain_curriculum_frac) {
                    return Err(Error::config(key, format!("must lie in [0, 1], got {value}")));
                }
            }
            "reward.mode" => {
                self.reward.mode = RewardMode::parse(value)
                    .map_err(|e| Error::config(key, e.to_string()))?
            }
            "reward.lambda_static" => {
                self.reward.lambda_static = parse_num(key, value, "a number")?;
                if !(self.reward.lambda_static.is_finite() && self.reward.lambda_static >= 0.0) {
                    return Err(Error::config(key, format!("must be >= 0, got {value}")));
                }
            }
            "controller.lambda0" => {
                self.controller.lambda0 = parse_num(key, value, "a number")?;
                if !(self.controller.lambda0.is_finite() && self.controller.lambda0 >= 0.0) {
                    return Err(Error::config(key, format!("must be >= 0, got {value}")));
                }
            }
            "controller.eta" => {
                self.controller.eta = parse_num(key, value, "a number")?;
                if !(self.controller.eta.is_finite() && self.controller.eta > 0.0) {
                    return Err(Error::config(key, format!("must be > 0, got {value}")));
                }
            }
            "controller.acc_ref" => {
                self.controller.acc_ref = if value == "auto" {
                    AccRef::Auto
                } else {
                    let v: f64 = parse_num(key, value, "a number in [0, 1] or `auto`")?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::config(key, format!("must lie in [0, 1], got {value}")));
                    }
                    AccRef::Fixed(v)
                }
            }
            "train.batch_size" => self.batch_size = parse_num(key, value, "an unsigned integer")?,
            "train.group_size" => self.group_size = parse_num(key, value, "an unsigned integer")?,
            "train.total_steps" => self.total_steps = parse_num(key, value, "an unsigned integer")?,
            "train.lr" => {
                self.train_lr = parse_num(key, value, "a number")?;
                if !(self.train_lr.is_finite() && self.train_lr > 0.0) {
                    return Err(Error::config(key, format!("must be > 0, got {value}")));
                }
            }
            "train.adv_epsilon" => {
                self.adv_epsilon = parse_num(key, value, "a number")?;
                if !(self.adv_epsilon.is_finite() && self.adv_epsilon > 0.0) {
                    return Err(Error::config(key, format!("must be > 0, got {value}")));
                }
            }
            "train.kl_coef" => {
                self.kl_coef = parse_num(key, value, "a number")?;
                if !(self.kl_coef.is_finite() && self.kl_coef >= 0.0) {
                    return Err(Error::config(key, format!("must be >= 0, got {value}")));
                }
            }
            "sample.train.temperature" => {
                self.sample_train.temperature = parse_num(key, value, "a number")?
            }
            "sample.train.top_p" => self.sample_train.top_p = parse_num(key, value, "a number")?,
            "sample.train.max_len" => {
                self.sample_train.max_len = parse_num(key, value, "an unsigned integer")?
            }
            "sample.eval.temperature" => {
                self.sample_eval.temperature = parse_num(key, value, "a number")?
            }
            "sample.eval.top_p" => self.sample_eval.top_p = parse_num(key, value, "a number")?,
            "sample.eval.max_len" => {
                self.sample_eval.max_len = parse_num(key, value, "an unsigned integer")?
            }
            "eval.num_problems" => {
                self.eval_num_problems = parse_num(key, value, "an unsigned integer")?
            }
            "eval.samples_per_problem" => {
                self.eval_samples_per_problem = parse_num(key, value, "an unsigned integer")?
            }
            "eval.interval" => self.eval_interval = parse_num(key, value, "an unsigned integer")?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Cross-field validation, delegating ranges to the owning modules.
    pub fn validate(&self) -> Result<()> {
        self.task
            .validate()
            .map_err(|e| Error::config("task", e.to_string()))?;
        Dims::new(self.d_emb, self.d_hid).validate()?;
        self.reward.validate()?;
        self.controller.validate()?;
        self.sample_train
            .validate()
            .map_err(|e| Error::config("sample.train", e.to_string()))?;
        self.sample_eval
            .validate()
            .map_err(|e| Error::config("sample.eval", e.to_string()))?;
        if self.pretrain_steps == 0 || self.pretrain_batch_size == 0 {
            return Err(Error::config("pretrain.steps", "must be >= 1"));
        }
        if self.pretrain_holdout_problems == 0 {
            return Err(Error::config("pretrain.holdout_problems", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if self.group_size < 2 {
            return Err(Error::config(
                "train.group_size",
                "must be >= 2 (group statistics need at least 2 samples)",
            ));
        }
        if self.total_steps == 0 {
            return Err(Error::config("train.total_steps", "must be >= 1"));
        }
        if self.eval_num_problems == 0 {
            return Err(Error::config("eval.num_problems", "must be >= 1"));
        }
        if self.eval_samples_per_problem == 0 {
            return Err(Error::config("eval.samples_per_problem", "must be >= 1"));
        }
        // The verbose base must fit its own generation budget, or the
        // pretraining gate can never pass.
        let teacher_max = 2 * self.task.redundancy_max * self.task.n_max + 3;
        if self.sample_train.max_len < teacher_max {
            return Err(Error::config(
                "sample.train.max_len",
                format!(
                    "must cover the longest teacher trace ({teacher_max} tokens for \
                     n_max {} and redundancy_max {})",
                    self.task.n_max, self.task.redundancy_max
                ),
            ));
        }
        Ok(())
    }

    /// Resolved snapshot in parse_str's own format.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let acc_ref = match self.controller.acc_ref {
            AccRef::Auto => "auto".to_string(),
            AccRef::Fixed(v) => format!("{v}"),
        };
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("controller.acc_ref", acc_ref);
        kv("controller.eta", format!("{}", self.controller.eta));
        kv("controller.lambda0", format!("{}", self.controller.lambda0));
        kv("eval.interval", format!("{}", self.eval_interval));
        kv("eval.num_problems", format!("{}", self.eval_num_problems));
        kv(
            "eval.samples_per_problem",
            format!("{}", self.eval_samples_per_problem),
        );
        kv("policy.d_emb", format!("{}", self.d_emb));
        kv("policy.d_hid", format!("{}", self.d_hid));
        kv("pretrain.batch_size", format!("{}", self.pretrain_batch_size));
        kv(
            "pretrain.curriculum_frac",
            format!("{}", self.pretrain_curriculum_frac),
        );
        kv(
            "pretrain.holdout_problems",
            format!("{}", self.pretrain_holdout_problems),
        );
        kv("pretrain.lr", format!("{}", self.pretrain_lr));
        kv("pretrain.steps", format!("{}", self.pretrain_steps));
        kv(
            "pretrain.target_accuracy",
            format!("{}", self.pretrain_target_accuracy),
        );
        kv("reward.lambda_static", format!("{}", self.reward.lambda_static));
        kv("reward.mode", self.reward.mode.name().to_string());
        kv("run.checkpoint_interval", format!("{}", self.checkpoint_interval));
        kv("run.out_dir", self.out_dir.clone());
        kv("run.seed", format!("{}", self.seed));
        kv("run.threads", format!("{}", self.threads));
        kv(
            "sample.eval.max_len",
            format!("{}", self.sample_eval.max_len),
        );
        kv(
            "sample.eval.temperature",
            format!("{}", self.sample_eval.temperature),
        );
        kv("sample.eval.top_p", format!("{}", self.sample_eval.top_p));
        kv(
            "sample.train.max_len",
            format!("{}", self.sample_train.max_len),
        );
        kv(
            "sample.train.temperature",
            format!("{}", self.sample_train.temperature),
        );
        kv("sample.train.top_p", format!("{}", self.sample_train.top_p));
        kv("task.n_max", format!("{}", self.task.n_max));
        kv("task.n_min", format!("{}", self.task.n_min));
        kv("task.redundancy_max", format!("{}", self.task.redundancy_max));
        kv("task.redundancy_min", format!("{}", self.task.redundancy_min));
        kv("train.adv_epsilon", format!("{}", self.adv_epsilon));
        kv("train.batch_size", format!("{}", self.batch_size));
        kv("train.group_size", format!("{}", self.group_size));
        kv("train.kl_coef", format!("{}", self.kl_coef));
        kv("train.lr", format!("{}", self.train_lr));
        kv("train.total_steps", format!("{}", self.total_steps));
        s
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.d_emb, self.d_hid)
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain_steps,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            target_accuracy: self.pretrain_target_accuracy,
            holdout_problems: self.pretrain_holdout_problems,
            max_len: self.sample_train.max_len,
            curriculum_frac: self.pretrain_curriculum_frac,
            dims: self.dims(),
            task: self.task,
            seed: self.seed,
            threads: self.threads,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            group_size: self.group_size,
            total_steps: self.total_steps,
            optimizer_lr: self.train_lr,
            adv_epsilon: self.adv_epsilon,
            reward: self.reward,
            controller: self.controller,
            sample: self.sample_train,
            task: self.task,
            kl_coef: self.kl_coef,
            seed: self.seed,
            threads: self.threads,
            checkpoint_interval: self.checkpoint_interval,
        }
    }

    /// Seed of the dedicated evaluation stream, disjoint from training.
    pub fn eval_seed(&self) -> u64 {
        seeding::derive(self.seed, "eval", 0)
    }

    /// The frozen held-out evaluation set for this run.
    pub fn eval_problem_set(&self) -> Result<Vec<Problem>> {
        eval::eval_problems(self.eval_seed(), self.eval_num_problems, &self.task)
    }
}
