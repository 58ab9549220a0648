//! Versioned checkpoint documents.
//!
//! A checkpoint is a self-describing JSON document holding the dims, the
//! flattened parameter vector (in the layout documented on [`Dims`]), the
//! optimizer moments, the controller fields as plain decimals, and the root
//! seed of the run's derivation tree. Numbers are written in shortest
//! round-trip form, so save/load is bit-exact.

use crate::controller::PenaltyController;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::policy::{Dims, PolicyParams};
use crate::trainer::TrainState;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    /// Streams are rederived from this root by label, so the root is the
    /// entire generator state.
    pub scheme: String,
    pub root_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Completed training steps.
    pub step: usize,
    pub dims: Dims,
    pub params: Vec<f64>,
    pub optimizer: Adam,
    pub controller: PenaltyController,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, root_seed: u64) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            step: state.next_step - 1,
            dims: state.params.dims(),
            params: state.params.theta().to_vec(),
            optimizer: state.optimizer.clone(),
            controller: state.controller,
            rng: RngState {
                scheme: "label-derivation".to_string(),
                root_seed,
            },
        }
    }

    /// Validate shapes and rebuild the training state.
    pub fn into_state(self) -> Result<(TrainState, u64)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: self.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let expected = self.dims.param_count();
        if self.params.len() != expected {
            return Err(Error::CheckpointShape {
                field: "params".to_string(),
                found: self.params.len(),
                expected,
            });
        }
        if self.optimizer.m.len() != expected {
            return Err(Error::CheckpointShape {
                field: "optimizer.m".to_string(),
                found: self.optimizer.m.len(),
                expected,
            });
        }
        if self.optimizer.v.len() != expected {
            return Err(Error::CheckpointShape {
                field: "optimizer.v".to_string(),
                found: self.optimizer.v.len(),
                expected,
            });
        }
        let params = PolicyParams::from_flat(self.dims, self.params)
            .map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
        // Re-run the controller range checks on untrusted input.
        let controller = PenaltyController::restore(
            self.controller.lambda(),
            self.controller.eta(),
            self.controller.acc_ref(),
            self.controller.step(),
        )
        .map_err(|e| Error::CheckpointCorrupt(e.to_string()))?;
        Ok((
            TrainState {
                params,
                optimizer: self.optimizer,
                controller,
                acc_ref_pending: false,
                next_step: self.step + 1,
            },
            self.rng.root_seed,
        ))
    }
}

pub fn save_checkpoint(path: &Path, state: &TrainState, root_seed: u64) -> Result<()> {
    let doc = Checkpoint::from_state(state, root_seed);
    let json = serde_json::to_string(&doc)
        .map_err(|e| Error::CheckpointCorrupt(format!("serialize: {e}")))?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, json).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainState, u64)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let doc: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::CheckpointCorrupt(format!("{}: {e}", path.display())))?;
    doc.into_state()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;
    use tempfile::tempdir;

    fn small_state() -> (TrainState, u64) {
        let mut cfg = RunConfig::default();
        cfg.set("policy.d_emb", "6").unwrap();
        cfg.set("policy.d_hid", "8").unwrap();
        cfg.set("controller.acc_ref", "0.5").unwrap();
        let params = PolicyParams::init(3, cfg.dims()).unwrap();
        let mut state = TrainState::new(params, &cfg.train_config()).unwrap();
        // Make the state non-trivial.
        state.optimizer.m[0] = 0.123456789123456789;
        state.optimizer.v[1] = 1e-17;
        state.params.theta_mut()[2] = -0.07777777777777;
        state.controller = state.controller.update(0.9).unwrap();
        state.next_step = 5;
        (state, cfg.seed)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (state, seed) = small_state();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &state, seed).unwrap();
        let (loaded, loaded_seed) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_seed, seed);
        assert_eq!(loaded.params.theta(), state.params.theta());
        assert_eq!(loaded.optimizer, state.optimizer);
        assert_eq!(loaded.controller, state.controller);
        assert_eq!(loaded.next_step, state.next_step);
    }

    #[test]
    fn version_mismatch_is_detected() {
        let (state, seed) = small_state();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &state, seed).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointVersion {
                found: 99,
                expected: CHECKPOINT_VERSION
            })
        ));
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let (state, seed) = small_state();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &state, seed).unwrap();
        let mut doc: Checkpoint =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc.params.pop();
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointShape { .. })
        ));
    }

    #[test]
    fn corrupt_file_is_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointCorrupt(_))
        ));
    }
}
