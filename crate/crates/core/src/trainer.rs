//! Supervised pretraining of the verbose base policy, then group-relative
//! policy optimization with the selected reward mode.
//!
//! The RL estimator is plain group-normalized REINFORCE: one on-policy
//! gradient step per batch, no importance ratios, no clipping, and no KL term
//! unless `kl_coef` is set. Rewards within a step are scored under a single
//! penalty coefficient; in adaptive mode the controller is updated after the
//! policy step, so the new coefficient first applies to the next step.
//!
//! Rollout collection fans out across threads reading one immutable parameter
//! snapshot; every rollout draws from its own derived seed and gradient
//! contributions reduce in fixed rollout order, so single-threaded and
//! parallel runs produce bit-identical results.

use crate::controller::{estimate_reference_accuracy, PenaltyController};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::Adam;
use crate::par::{build_pool, install, ordered_map};
use crate::policy::{Dims, PolicyParams, Rollout, SampleConfig};
use crate::reward::{shaped_reward, RewardMode, RewardSpec};
use crate::seeding;
use crate::task::{sample_problem, teacher_trace, Problem, TaskConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Reference accuracy: a literal value, or estimated from the first RL batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AccRef {
    Auto,
    Fixed(f64),
}

/// Controller hyperparameters as configured (before auto-resolution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub lambda0: f64,
    pub eta: f64,
    pub acc_ref: AccRef,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        // Constructing a controller runs the range checks; acc_ref auto uses a
        // placeholder until the first batch pins it.
        let probe = match self.acc_ref {
            AccRef::Auto => 0.0,
            AccRef::Fixed(v) => v,
        };
        PenaltyController::new(self.lambda0, self.eta, probe)?;
        Ok(())
    }
}

/// Everything one RL run needs besides the starting parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub group_size: usize,
    pub total_steps: usize,
    pub optimizer_lr: f64,
    pub adv_epsilon: f64,
    pub reward: RewardSpec,
    pub controller: ControllerConfig,
    pub sample: SampleConfig,
    pub task: TaskConfig,
    /// Reward-level KL penalty against the base policy; 0 disables it.
    pub kl_coef: f64,
    pub seed: u64,
    /// 1 = strictly serial (the reproducibility reference); 0 = all cores.
    pub threads: usize,
    /// Emit a checkpoint every this many steps; 0 = final only.
    pub checkpoint_interval: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if self.group_size < 2 {
            return Err(Error::validation(
                "group_size must be >= 2 (group statistics need at least 2 samples)",
            ));
        }
        if self.total_steps < 1 {
            return Err(Error::validation("total_steps must be >= 1"));
        }
        if !self.optimizer_lr.is_finite() || self.optimizer_lr <= 0.0 {
            return Err(Error::validation(format!(
                "optimizer learning rate must be finite and > 0, got {}",
                self.optimizer_lr
            )));
        }
        if !self.adv_epsilon.is_finite() || self.adv_epsilon <= 0.0 {
            return Err(Error::validation(format!(
                "adv_epsilon must be finite and > 0, got {}",
                self.adv_epsilon
            )));
        }
        if !self.kl_coef.is_finite() || self.kl_coef < 0.0 {
            return Err(Error::validation(format!(
                "kl_coef must be finite and >= 0, got {}",
                self.kl_coef
            )));
        }
        self.reward.validate()?;
        self.controller.validate()?;
        self.sample.validate()?;
        self.task.validate()?;
        Ok(())
    }
}

/// One training step's logged metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Penalty coefficient applied to this step's rewards.
    pub lambda: f64,
    pub acc_train: f64,
    pub mean_len: f64,
    pub mean_len_correct: Option<f64>,
    pub mean_len_incorrect: Option<f64>,
    pub mean_reward: f64,
    pub grad_norm: f64,
}

/// Mutable state threaded through the run; exactly what checkpoints capture.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: PolicyParams,
    pub optimizer: Adam,
    pub controller: PenaltyController,
    /// True until an auto reference accuracy has been pinned by the first batch.
    pub acc_ref_pending: bool,
    /// 1-based index of the next step to execute.
    pub next_step: usize,
}

impl TrainState {
    pub fn new(base: PolicyParams, cfg: &TrainConfig) -> Result<TrainState> {
        cfg.validate()?;
        let (acc_ref, pending) = match cfg.controller.acc_ref {
            AccRef::Fixed(v) => (v, false),
            AccRef::Auto => (0.0, cfg.reward.mode == RewardMode::Adaptive),
        };
        let controller = PenaltyController::new(cfg.controller.lambda0, cfg.controller.eta, acc_ref)?;
        let optimizer = Adam::new(base.theta().len(), cfg.optimizer_lr)?;
        Ok(TrainState {
            params: base,
            optimizer,
            controller,
            acc_ref_pending: pending,
            next_step: 1,
        })
    }
}

/// Streaming sink for metrics and periodic checkpoints. `on_step` sees the
/// state after the step it reports.
pub trait TrainObserver {
    fn on_step(&mut self, _state: &TrainState, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

/// Observer that discards everything.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// `A_i = (R_i - mean) / popstd`, population standard deviation; groups whose
/// spread is within `adv_epsilon` of zero get all-zero advantages. Dividing by
/// the bare standard deviation (rather than std + epsilon) keeps advantages
/// exactly invariant under positive affine reward transforms.
pub fn group_advantages(rewards: &[f64], adv_epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::validation(
            "group statistics require at least 2 rollouts",
        ));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let popstd = var.sqrt();
    if popstd <= adv_epsilon {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / popstd).collect())
}

/// Execute one training step: sample, score, normalize, ascend, update the
/// controller, and report. Deterministic given the config seed.
pub fn train_step(
    state: &mut TrainState,
    cfg: &TrainConfig,
    ref_policy: Option<&PolicyParams>,
) -> Result<StepRecord> {
    let t = state.next_step;
    let step_seed = seeding::derive(cfg.seed, "train-step", t as u64);

    // Sample the batch: B prompts, G rollouts each, every rollout on its own
    // derived stream.
    let problems: Vec<Problem> = (0..cfg.batch_size)
        .map(|b| {
            let mut rng = seeding::rng(seeding::derive(step_seed, "problem", b as u64));
            sample_problem(&mut rng, cfg.task.n_min, cfg.task.n_max)
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.batch_size)
        .flat_map(|b| (0..cfg.group_size).map(move |g| (b, g)))
        .collect();
    let params = &state.params;
    let mut rollouts: Vec<Rollout> = ordered_map(cfg.threads, &jobs, |&(b, g)| {
        let prompt_seed = seeding::derive(step_seed, "prompt", b as u64);
        let mut rng = seeding::rng(seeding::derive(prompt_seed, "rollout", g as u64));
        params.sample_rollout(&problems[b], &cfg.sample, &mut rng)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // Pin an auto reference accuracy from the first batch, sampled from the
    // base policy before any penalty has acted.
    if state.acc_ref_pending {
        let flags: Vec<bool> = rollouts.iter().map(|r| r.is_correct).collect();
        let acc_ref = estimate_reference_accuracy(&flags)?;
        state.controller = PenaltyController::restore(
            state.controller.lambda(),
            state.controller.eta(),
            acc_ref,
            state.controller.step(),
        )?;
        state.acc_ref_pending = false;
    }

    let lambda = match cfg.reward.mode {
        RewardMode::CorrectnessOnly => 0.0,
        RewardMode::Static => cfg.reward.lambda_static,
        RewardMode::Adaptive => state.controller.lambda(),
    };

    // Score. The optional KL term compares sequence log-probabilities against
    // the frozen base policy.
    let kl_ref: Vec<f64> = if cfg.kl_coef > 0.0 {
        let base = ref_policy.ok_or_else(|| {
            Error::validation("kl_coef > 0 requires a reference policy for the KL term")
        })?;
        ordered_map(cfg.threads, &rollouts, |r| {
            base.sequence_logprob(&r.problem, &r.tokens)
        })
        .into_iter()
        .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    for (i, r) in rollouts.iter_mut().enumerate() {
        let mut reward = shaped_reward(r.is_correct, r.length, lambda)?;
        if cfg.kl_coef > 0.0 {
            reward -= cfg.kl_coef * (r.logprob() - kl_ref[i]);
        }
        r.reward = Some(reward);
    }

    // Group-relative advantages.
    for group in rollouts.chunks_mut(cfg.group_size) {
        let rewards: Vec<f64> = group.iter().map(|r| r.reward.expect("scored")).collect();
        let advs = group_advantages(&rewards, cfg.adv_epsilon)?;
        for (r, a) in group.iter_mut().zip(advs) {
            r.advantage = Some(a);
        }
    }

    // Policy gradient: g = 1/(B*G) * sum_i A_i * grad log pi(y_i | x_i).
    // Zero-advantage rollouts contribute nothing and are skipped.
    let n_params = state.params.theta().len();
    let contributions: Vec<Option<Vec<f64>>> = ordered_map(cfg.threads, &rollouts, |r| {
        let a = r.advantage.expect("normalized");
        if a == 0.0 {
            return Ok(None);
        }
        let (_, mut grad) = params.sequence_logprob_grad(&r.problem, &r.tokens)?;
        for gi in grad.iter_mut() {
            *gi *= a;
        }
        Ok(Some(grad))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut grad = vec![0.0; n_params];
    for contribution in contributions.into_iter().flatten() {
        math::axpy(&mut grad, 1.0, &contribution);
    }
    let scale = 1.0 / (cfg.batch_size * cfg.group_size) as f64;
    for gi in grad.iter_mut() {
        *gi *= scale;
    }
    let grad_norm = math::l2_norm(&grad);
    if !grad_norm.is_finite() {
        return Err(Error::Numerical {
            step: t,
            detail: format!(
                "non-finite policy gradient (lambda {lambda}, mean reward {})",
                rollouts
                    .iter()
                    .map(|r| r.reward.unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / rollouts.len() as f64
            ),
        });
    }
    state.optimizer.ascend(state.params.theta_mut(), &grad);

    // Batch statistics over all B*G rollouts.
    let total = rollouts.len() as f64;
    let acc_t = rollouts.iter().filter(|r| r.is_correct).count() as f64 / total;
    let mean_len = rollouts.iter().map(|r| r.length as f64).sum::<f64>() / total;
    let mean_over = |keep: bool| -> Option<f64> {
        let lens: Vec<f64> = rollouts
            .iter()
            .filter(|r| r.is_correct == keep)
            .map(|r| r.length as f64)
            .collect();
        if lens.is_empty() {
            None
        } else {
            Some(lens.iter().sum::<f64>() / lens.len() as f64)
        }
    };
    let mean_reward = rollouts.iter().map(|r| r.reward.expect("scored")).sum::<f64>() / total;

    // The controller moves only in adaptive mode, after the policy step.
    if cfg.reward.mode == RewardMode::Adaptive {
        state.controller = state.controller.update(acc_t)?;
    }

    state.next_step += 1;
    Ok(StepRecord {
        step: t,
        lambda,
        acc_train: acc_t,
        mean_len,
        mean_len_correct: mean_over(true),
        mean_len_incorrect: mean_over(false),
        mean_reward,
        grad_norm,
    })
}

/// Run steps `state.next_step ..= cfg.total_steps`, streaming records and
/// periodic checkpoints to the observer. Prior metrics reach the observer
/// before an abort propagates.
pub fn train(
    state: &mut TrainState,
    cfg: &TrainConfig,
    ref_policy: Option<&PolicyParams>,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    let pool = build_pool(cfg.threads)?;
    let mut records = Vec::new();
    while state.next_step <= cfg.total_steps {
        let record = install(&pool, || train_step(state, cfg, ref_policy))?;
        observer.on_step(state, &record)?;
        let step = record.step;
        records.push(record);
        if cfg.checkpoint_interval > 0
            && step % cfg.checkpoint_interval == 0
            && step < cfg.total_steps
        {
            observer.on_checkpoint(state)?;
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// pretraining
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub target_accuracy: f64,
    pub holdout_problems: usize,
    pub max_len: usize,
    pub dims: Dims,
    pub task: TaskConfig,
    pub seed: u64,
    pub threads: usize,
    /// Fraction of the budget spent ramping the problem-length ceiling from
    /// n_min up to n_max (0 trains on the full range from step one). The
    /// ramp only reshapes the training schedule; the held-out gate always
    /// uses the full task distribution.
    pub curriculum_frac: f64,
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::validation("pretrain steps must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::validation("pretrain batch_size must be >= 1"));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::validation(format!(
                "pretrain learning rate must be finite and > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return Err(Error::validation(
                "pretrain target accuracy must lie in [0, 1]",
            ));
        }
        if self.holdout_problems < 1 {
            return Err(Error::validation("pretrain holdout needs >= 1 problem"));
        }
        if !(0.0..=1.0).contains(&self.curriculum_frac) {
            return Err(Error::validation(
                "pretrain curriculum fraction must lie in [0, 1]",
            ));
        }
        self.dims.validate()?;
        self.task.validate()?;
        Ok(())
    }

    /// Sampling bounds at step `s`. During the curriculum window the problem
    /// length ceiling ramps n_min -> n_max and the redundancy ceiling ramps
    /// 1 -> redundancy_max (short traces keep early credit paths short);
    /// afterwards both ranges sit at the task defaults.
    fn stage_bounds(&self, s: usize) -> (usize, usize, usize, usize) {
        let t = &self.task;
        if self.curriculum_frac == 0.0 {
            return (t.n_min, t.n_max, t.redundancy_min, t.redundancy_max);
        }
        let ramp_steps = (self.steps as f64 * self.curriculum_frac).max(1.0);
        let progress = (s as f64 / ramp_steps).min(1.0);
        // Two phases: grow problem length at single-repetition traces first
        // (the replay mechanism at full depth over short spans), then stretch
        // the repetition range toward the default while holding full length.
        if progress < 0.6 {
            let p = progress / 0.6;
            let n_hi = t.n_min + (p * (t.n_max - t.n_min) as f64).floor() as usize;
            (t.n_min, n_hi, 1, 1)
        } else {
            let p = (progress - 0.6) / 0.4;
            let r_lo = 1 + (p * (t.redundancy_min - 1) as f64).floor() as usize;
            let r_hi = 1 + (p * (t.redundancy_max - 1) as f64).floor() as usize;
            (t.n_min, t.n_max, r_lo, r_hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub holdout_accuracy: f64,
    pub holdout_mean_len: f64,
    pub steps_run: usize,
    pub final_mean_ce: f64,
}

/// Total cross-entropy of a trace under the policy, in nats.
pub fn trace_cross_entropy(
    params: &PolicyParams,
    problem: &Problem,
    tokens: &[crate::task::Token],
) -> Result<f64> {
    Ok(-params.sequence_logprob(problem, tokens)?)
}

/// Fit the policy to redundant teacher traces by per-token cross-entropy,
/// then gate on held-out greedy accuracy.
pub fn pretrain(cfg: &PretrainConfig) -> Result<(PolicyParams, PretrainReport)> {
    cfg.validate()?;
    let mut params = PolicyParams::init(seeding::derive(cfg.seed, "init", 0), cfg.dims)?;
    let mut opt = Adam::new(params.theta().len(), cfg.lr)?;
    let pool = build_pool(cfg.threads)?;
    let mut mean_ce = f64::NAN;
    for s in 0..cfg.steps {
        // Constant rate through the curriculum window, then a linear decay to
        // one fifth for consolidation on the full distribution.
        let decay_from = (cfg.steps as f64 * cfg.curriculum_frac.max(0.5)) as usize;
        opt.lr = if s <= decay_from {
            cfg.lr
        } else {
            let t = (s - decay_from) as f64 / (cfg.steps - decay_from).max(1) as f64;
            cfg.lr * (1.0 - 0.8 * t)
        };
        let batch_seed = seeding::derive(cfg.seed, "pretrain-batch", s as u64);
        let (n_lo, n_hi, r_lo, r_hi) = cfg.stage_bounds(s);
        let items: Vec<(Problem, Vec<crate::task::Token>)> = (0..cfg.batch_size)
            .map(|i| {
                let mut rng = seeding::rng(seeding::derive(batch_seed, "item", i as u64));
                let problem = sample_problem(&mut rng, n_lo, n_hi)?;
                let r = rng.random_range(r_lo..=r_hi);
                let trace = teacher_trace(&problem, r)?;
                Ok((problem, trace))
            })
            .collect::<Result<_>>()?;
        let p = &params;
        let run = || -> Vec<Result<(f64, Vec<f64>, usize)>> {
            ordered_map(cfg.threads, &items, |(problem, trace)| {
                let (lp, grad) = p.sequence_logprob_grad(problem, trace)?;
                Ok((lp, grad, trace.len()))
            })
        };
        let results = install(&pool, run);
        let mut grad = vec![0.0; params.theta().len()];
        let mut total_tokens = 0usize;
        let mut total_lp = 0.0;
        for res in results {
            let (lp, g, len) = res?;
            math::axpy(&mut grad, 1.0, &g);
            total_tokens += len;
            total_lp += lp;
        }
        let scale = 1.0 / total_tokens as f64;
        for gi in grad.iter_mut() {
            *gi *= scale;
        }
        mean_ce = -total_lp / total_tokens as f64;
        // Ascent on mean per-token log-likelihood = descent on cross-entropy.
        opt.ascend(params.theta_mut(), &grad);
    }

    // Held-out gate: greedy decoding on a dedicated problem stream.
    let mut rng = seeding::rng(seeding::derive(cfg.seed, "pretrain-holdout", 0));
    let holdout: Vec<Problem> = (0..cfg.holdout_problems)
        .map(|_| sample_problem(&mut rng, cfg.task.n_min, cfg.task.n_max))
        .collect::<Result<_>>()?;
    let greedy = SampleConfig {
        temperature: 0.0,
        top_p: 1.0,
        max_len: cfg.max_len,
    };
    let p = &params;
    let decode = || -> Result<Vec<Rollout>> {
        ordered_map(cfg.threads, &holdout, |problem| {
            let mut rng = seeding::rng(0); // greedy ignores the stream
            p.sample_rollout(problem, &greedy, &mut rng)
        })
        .into_iter()
        .collect()
    };
    let rollouts = install(&pool, decode)?;
    let mut correct = 0usize;
    let mut total_len = 0usize;
    for r in &rollouts {
        if r.is_correct {
            correct += 1;
        }
        total_len += r.length;
    }
    let holdout_accuracy = correct as f64 / holdout.len() as f64;
    let holdout_mean_len = total_len as f64 / holdout.len() as f64;
    if holdout_accuracy < cfg.target_accuracy {
        return Err(Error::PretrainFailed {
            reached: holdout_accuracy,
            required: cfg.target_accuracy,
            steps: cfg.steps,
        });
    }
    Ok((
        params,
        PretrainReport {
            holdout_accuracy,
            holdout_mean_len,
            steps_run: cfg.steps,
            final_mean_ce: mean_ce,
        },
    ))
}
