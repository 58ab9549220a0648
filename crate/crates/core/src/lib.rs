//! Desk-scale laboratory for adaptive length-penalty reward shaping.
//!
//! The crate trains a tiny recurrent policy on a synthetic scratchpad
//! arithmetic task with group-relative policy optimization, shaping the
//! reward as correctness minus a per-token penalty. The penalty coefficient
//! can be fixed (the static baseline) or steered each step by a feedback
//! controller comparing batch accuracy to a frozen reference — trading
//! response length against accuracy on the fly.
//!
//! Module map:
//! - [`task`]: problems, teacher traces, and the show-your-work verifier.
//! - [`policy`]: the recurrent policy, sampling, and exact gradients.
//! - [`controller`]: the adaptive penalty coefficient.
//! - [`reward`]: the shaped reward.
//! - [`trainer`]: supervised pretraining and the RL loop.
//! - [`eval`]: held-out multi-sample evaluation and reduction reports.
//! - [`harness`]: run configs, checkpoints, metrics files, sweeps, plots.

pub mod controller;
mod dd;
pub mod error;
pub mod eval;
pub mod harness;
pub mod math;
pub mod optim;
mod par;
pub mod policy;
pub mod reward;
pub mod seeding;
pub mod task;
pub mod trainer;

pub use error::{Error, Result};
