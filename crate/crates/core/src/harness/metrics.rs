//! Metrics and evaluation CSVs.
//!
//! Fixed schemas, shortest round-trip decimal formatting, absent categories
//! as empty fields. Rows are flushed as they are written so partial metrics
//! survive an abort.

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::trainer::StepRecord;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str =
    "step,lambda,acc_train,mean_len,mean_len_correct,mean_len_incorrect,mean_reward,grad_norm";

pub const EVAL_HEADER: &str = "step,accuracy,mean_len,mean_len_correct,mean_len_incorrect,\
num_problems,samples_per_problem,temperature,top_p";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn format_step_record(r: &StepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.step,
        r.lambda,
        r.acc_train,
        r.mean_len,
        opt(r.mean_len_correct),
        opt(r.mean_len_incorrect),
        r.mean_reward,
        r.grad_norm
    )
}

pub fn format_eval_row(step: usize, r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        step,
        r.accuracy,
        r.mean_len,
        opt(r.mean_len_correct),
        opt(r.mean_len_incorrect),
        r.num_problems,
        r.samples_per_problem,
        r.temperature,
        r.top_p
    )
}

/// Line-buffered CSV writer that flushes per row.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<CsvWriter> {
        let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = CsvWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write_line(header)?;
        Ok(w)
    }

    /// Reopen for appending (used on resume, after the file has been trimmed
    /// to the checkpoint step).
    pub fn append(path: &Path) -> Result<CsvWriter> {
        let file = File::options()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(CsvWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(self.path.display().to_string(), e))
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    row: usize,
    column: &str,
    value: &str,
) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::CsvFormat {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        detail: format!("cannot parse `{value}`"),
    })
}

fn parse_opt_field(path: &Path, row: usize, column: &str, value: &str) -> Result<Option<f64>> {
    if value.is_empty() {
        Ok(None)
    } else {
        parse_field(path, row, column, value).map(Some)
    }
}

/// Read a metrics CSV back into step records; errors name the row (1-based,
/// counting the header) and column.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        Some((_, header)) => {
            return Err(Error::CsvFormat {
                path: path.display().to_string(),
                row: 1,
                column: "header".to_string(),
                detail: format!("expected `{METRICS_HEADER}`, got `{header}`"),
            })
        }
        None => {
            return Err(Error::CsvFormat {
                path: path.display().to_string(),
                row: 1,
                column: "header".to_string(),
                detail: "empty file".to_string(),
            })
        }
    }
    let columns = METRICS_HEADER.split(',').collect::<Vec<_>>();
    let mut records = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::CsvFormat {
                path: path.display().to_string(),
                row,
                column: "row".to_string(),
                detail: format!("expected {} fields, got {}", columns.len(), fields.len()),
            });
        }
        records.push(StepRecord {
            step: parse_field(path, row, columns[0], fields[0])?,
            lambda: parse_field(path, row, columns[1], fields[1])?,
            acc_train: parse_field(path, row, columns[2], fields[2])?,
            mean_len: parse_field(path, row, columns[3], fields[3])?,
            mean_len_correct: parse_opt_field(path, row, columns[4], fields[4])?,
            mean_len_incorrect: parse_opt_field(path, row, columns[5], fields[5])?,
            mean_reward: parse_field(path, row, columns[6], fields[6])?,
            grad_norm: parse_field(path, row, columns[7], fields[7])?,
        });
    }
    Ok(records)
}
