//! Reward shaping: correctness minus a per-token length penalty.
//!
//! The static and adaptive variants share one formula,
//! `R = 1{correct} - lambda * len`, and differ only in where `lambda` comes
//! from: a fixed hyperparameter, or the controller state at the current step.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which reward the trainer applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    CorrectnessOnly,
    Static,
    Adaptive,
}

impl RewardMode {
    pub fn parse(s: &str) -> Result<RewardMode> {
        match s {
            "correctness_only" => Ok(RewardMode::CorrectnessOnly),
            "static" => Ok(RewardMode::Static),
            "adaptive" => Ok(RewardMode::Adaptive),
            _ => Err(Error::validation(format!(
                "unknown reward mode `{s}` (expected correctness_only, static, or adaptive)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardMode::CorrectnessOnly => "correctness_only",
            RewardMode::Static => "static",
            RewardMode::Adaptive => "adaptive",
        }
    }
}

/// Reward configuration; `lambda_static` is read only in static mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub mode: RewardMode,
    pub lambda_static: f64,
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_static.is_finite() || self.lambda_static < 0.0 {
            return Err(Error::validation(format!(
                "lambda_static must be finite and >= 0, got {}",
                self.lambda_static
            )));
        }
        Ok(())
    }
}

/// One scored response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub is_correct: bool,
    pub length: usize,
    pub reward: f64,
}

/// `1{correct} - lambda * length`, in generated tokens.
pub fn shaped_reward(is_correct: bool, length: usize, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::validation(format!(
            "length penalty must be finite and >= 0, got {lambda}"
        )));
    }
    let correctness = if is_correct { 1.0 } else { 0.0 };
    Ok(correctness - lambda * length as f64)
}

/// 1.0 if correct else 0.0; equals `shaped_reward(c, len, 0.0)`.
pub fn correctness_reward(is_correct: bool) -> f64 {
    if is_correct {
        1.0
    } else {
        0.0
    }
}
