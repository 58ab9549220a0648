//! Adaptive penalty coefficient.
//!
//! The controller holds the per-token length penalty `lambda` and nudges it
//! once per training step by `eta * (acc_t - acc_ref)`, clamped at zero:
//! above-reference accuracy buys a stronger penalty, below-reference accuracy
//! relaxes it. `acc_ref` is estimated once, from the first batch sampled off
//! the pretrained base policy, and stays frozen for the whole run.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Immutable controller state; one update per training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyController {
    lambda: f64,
    eta: f64,
    acc_ref: f64,
    step: u64,
}

impl PenaltyController {
    pub fn new(lambda0: f64, eta: f64, acc_ref: f64) -> Result<PenaltyController> {
        if !lambda0.is_finite() || lambda0 < 0.0 {
            return Err(Error::validation(format!(
                "initial penalty must be finite and >= 0, got {lambda0}"
            )));
        }
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::validation(format!(
                "controller learning rate must be finite and > 0, got {eta}"
            )));
        }
        if !acc_ref.is_finite() || !(0.0..=1.0).contains(&acc_ref) {
            return Err(Error::validation(format!(
                "reference accuracy must lie in [0, 1], got {acc_ref}"
            )));
        }
        Ok(PenaltyController {
            lambda: lambda0,
            eta,
            acc_ref,
            step: 0,
        })
    }

    /// Rebuild a controller from checkpointed fields.
    pub fn restore(lambda: f64, eta: f64, acc_ref: f64, step: u64) -> Result<PenaltyController> {
        let mut c = PenaltyController::new(lambda, eta, acc_ref)?;
        c.step = step;
        Ok(c)
    }

    /// `lambda' = max(0, lambda + eta * (acc_t - acc_ref))`; pure, returns the
    /// successor state with the step count advanced.
    pub fn update(&self, acc_t: f64) -> Result<PenaltyController> {
        if !acc_t.is_finite() || !(0.0..=1.0).contains(&acc_t) {
            return Err(Error::validation(format!(
                "batch accuracy must be a finite value in [0, 1], got {acc_t} \
                 (corrupted batch statistic?)"
            )));
        }
        let lambda = (self.lambda + self.eta * (acc_t - self.acc_ref)).max(0.0);
        Ok(PenaltyController {
            lambda,
            eta: self.eta,
            acc_ref: self.acc_ref,
            step: self.step + 1,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn acc_ref(&self) -> f64 {
        self.acc_ref
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Fraction of true flags; used once on the first RL batch to anchor `acc_ref`.
pub fn estimate_reference_accuracy(correct_flags: &[bool]) -> Result<f64> {
    if correct_flags.is_empty() {
        return Err(Error::validation(
            "reference accuracy needs at least one rollout",
        ));
    }
    let correct = correct_flags.iter().filter(|&&c| c).count();
    Ok(correct as f64 / correct_flags.len() as f64)
}
