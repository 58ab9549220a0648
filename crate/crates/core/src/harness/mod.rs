//! Run orchestration: config files, checkpoints, metrics persistence,
//! parameter sweeps, and plot emission.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod runner;
pub mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use metrics::{read_metrics_csv, EVAL_HEADER, METRICS_HEADER};
pub use plot::emit_plots;
pub use runner::{run_eval, run_pretrain, run_train, BaseSource, RunOutput};
pub use sweep::{run_sweep, Axis, SweepSpec};
