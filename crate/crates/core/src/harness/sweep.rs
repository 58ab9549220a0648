//! Parameter sweeps: a cartesian grid of config overrides, several seeds per
//! cell, one run directory per (cell, seed), and a combined summary CSV.
//!
//! The verbose base is pretrained once from the base config and shared across
//! cells, mirroring how penalty knobs are swept against a fixed base model.
//! A failed cell records its error in the summary and does not abort the
//! rest.

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::runner::{run_train, BaseSource, RunOutput};
use crate::policy::PolicyParams;
use crate::seeding;
use crate::trainer;
use std::path::{Path, PathBuf};

/// One sweep axis: every value is applied to each listed key (multiple keys
/// express tied settings such as `lambda0+eta`).
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub keys: Vec<String>,
    pub values: Vec<String>,
}

impl Axis {
    /// Parse `key[+key2...]=v1,v2,...`.
    pub fn parse(spec: &str) -> Result<Axis> {
        let (keys, values) = spec.split_once('=').ok_or_else(|| {
            Error::validation(format!("axis `{spec}` must look like key=v1,v2,..."))
        })?;
        let keys: Vec<String> = keys.split('+').map(|k| k.trim().to_string()).collect();
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if keys.iter().any(|k| k.is_empty()) || values.iter().any(|v| v.is_empty()) {
            return Err(Error::validation(format!("axis `{spec}` has empty parts")));
        }
        Ok(Axis { keys, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
    pub seeds_per_cell: usize,
}

#[derive(Debug)]
pub struct CellResult {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    /// (key, value) pairs applied for this cell, in axis order.
    pub assignment: Vec<(String, String)>,
    pub run_dir: PathBuf,
    pub outcome: std::result::Result<RunOutput, Error>,
}

#[derive(Debug)]
pub struct SweepSummary {
    pub cells: Vec<CellResult>,
    pub summary_path: PathBuf,
}

fn cartesian(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(grid.len() * axis.values.len());
        for assignment in &grid {
            for value in &axis.values {
                let mut a = assignment.clone();
                for key in &axis.keys {
                    a.push((key.clone(), value.clone()));
                }
                next.push(a);
            }
        }
        grid = next;
    }
    grid
}

/// Execute every (cell, seed) as an independent run and write `summary.csv`.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepSummary> {
    spec.base.validate()?;
    if spec.seeds_per_cell == 0 {
        return Err(Error::validation("sweep needs at least one seed per cell"));
    }
    if spec.axes.is_empty() {
        return Err(Error::validation("sweep needs at least one axis"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    // One shared verbose base for the whole grid.
    let (base_params, _) = trainer::pretrain(&spec.base.pretrain_config())?;

    let grid = cartesian(&spec.axes);
    let mut cells = Vec::new();
    for (cell_idx, assignment) in grid.iter().enumerate() {
        for rep in 0..spec.seeds_per_cell {
            let seed = seeding::derive(
                seeding::derive(spec.base.seed, "sweep-cell", cell_idx as u64),
                "rep",
                rep as u64,
            );
            let run_dir = out_dir.join(format!("cell{cell_idx:03}_rep{rep}"));
            let outcome = run_cell(&spec.base, assignment, seed, &run_dir, &base_params);
            cells.push(CellResult {
                cell: cell_idx,
                rep,
                seed,
                assignment: assignment.clone(),
                run_dir,
                outcome,
            });
        }
    }

    let summary_path = out_dir.join("summary.csv");
    write_summary(&summary_path, &spec.axes, &cells)?;
    Ok(SweepSummary {
        cells,
        summary_path,
    })
}

fn run_cell(
    base: &RunConfig,
    assignment: &[(String, String)],
    seed: u64,
    run_dir: &Path,
    base_params: &PolicyParams,
) -> std::result::Result<RunOutput, Error> {
    let mut cfg = base.clone();
    for (key, value) in assignment {
        cfg.set(key, value)?;
    }
    cfg.seed = seed;
    cfg.validate()?;
    run_train(&cfg, run_dir, BaseSource::Params(base_params))
}

fn write_summary(path: &Path, axes: &[Axis], cells: &[CellResult]) -> Result<()> {
    let mut axis_keys: Vec<String> = Vec::new();
    for axis in axes {
        for key in &axis.keys {
            axis_keys.push(key.clone());
        }
    }
    let mut out = String::new();
    out.push_str("cell,rep,seed,");
    out.push_str(&axis_keys.join(","));
    out.push_str(",status,");
    out.push_str("final_step,final_lambda,final_acc_train,final_mean_len,final_mean_reward,");
    out.push_str("eval_accuracy,eval_mean_len,error\n");
    for cell in cells {
        out.push_str(&format!("{},{},{},", cell.cell, cell.rep, cell.seed));
        let values: Vec<&str> = cell
            .assignment
            .iter()
            .map(|(_, v)| v.as_str())
            .collect();
        out.push_str(&values.join(","));
        match &cell.outcome {
            Ok(run) => {
                let last = run.records.last().expect("at least one step");
                out.push_str(&format!(
                    ",ok,{},{},{},{},{},{},{},\n",
                    last.step,
                    last.lambda,
                    last.acc_train,
                    last.mean_len,
                    last.mean_reward,
                    run.final_eval.accuracy,
                    run.final_eval.mean_len
                ));
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                out.push_str(&format!(",error,,,,,,,,{msg}\n"));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
