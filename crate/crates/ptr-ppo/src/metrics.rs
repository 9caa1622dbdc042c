//! CSV writers and readers for run artifacts.
//!
//! Schemas are fixed:
//! - `metrics.csv`: one row per evaluation,
//!   `step,mean_return,value_loss,policy_loss,entropy`.
//! - `heatmap.csv`: one row per off-policy iteration, one column per memory
//!   slot, raw (pre-exponent) priorities.
//! - `comparison.csv`: one row per algorithm,
//!   `algorithm,seeds,mean_final_return,std_final_return`.
//!
//! Values are written with `f64` shortest-round-trip formatting, so runs
//! with the same seed produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: row {row} has {got} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: row {row}: bad number `{text}`")]
    BadNumber {
        path: PathBuf,
        row: usize,
        text: String,
    },
    #[error("{path}: file has no data rows")]
    EmptyMatrix { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const METRICS_HEADER: &str = "step,mean_return,value_loss,policy_loss,entropy";

/// One evaluation row of `metrics.csv`.
#[derive(Clone, Copy, Debug)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_return: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
}

/// Appending writer for `metrics.csv`; the header goes out on creation.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, MetricsError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}").map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<(), MetricsError> {
        writeln!(
            self.out,
            "{},{},{},{},{}",
            row.step, row.mean_return, row.value_loss, row.policy_loss, row.entropy
        )
        .map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }

    /// Marks a run that aborted mid-way; the file stays parseable but is
    /// visibly flagged.
    pub fn flag_aborted(&mut self, message: &str) -> Result<(), MetricsError> {
        writeln!(self.out, "# aborted: {message}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// Appending writer for the heatmap matrix; header names one column per
/// memory slot.
pub struct HeatmapWriter {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl HeatmapWriter {
    pub fn create(path: &Path, columns: usize) -> Result<Self, MetricsError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        let header: Vec<String> = (0..columns).map(|i| format!("slot_{i}")).collect();
        writeln!(out, "{}", header.join(",")).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
            columns,
        })
    }

    pub fn write_row(&mut self, row: &[f64]) -> Result<(), MetricsError> {
        assert_eq!(row.len(), self.columns, "heatmap row width is fixed");
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(self.out, "{}", cells.join(",")).map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))
    }
}

/// Writes `comparison.csv` rows: per algorithm, mean and standard deviation
/// of the final return across seeds.
pub fn write_comparison(
    path: &Path,
    rows: &[(String, usize, f64, f64)],
) -> Result<(), MetricsError> {
    let mut out = String::from("algorithm,seeds,mean_final_return,std_final_return\n");
    for (alg, seeds, mean, std) in rows {
        out.push_str(&format!("{alg},{seeds},{mean},{std}\n"));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Reads a rectangular CSV matrix (header + rows of numbers). Ragged rows
/// are an error.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| MetricsError::EmptyMatrix {
        path: path.to_path_buf(),
    })?;
    let expected = header.split(',').count();
    let mut matrix = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected {
            return Err(MetricsError::RaggedRow {
                path: path.to_path_buf(),
                row: i + 2,
                got: cells.len(),
                expected,
            });
        }
        let mut row = Vec::with_capacity(expected);
        for cell in cells {
            row.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| MetricsError::BadNumber {
                        path: path.to_path_buf(),
                        row: i + 2,
                        text: cell.to_string(),
                    })?,
            );
        }
        matrix.push(row);
    }
    if matrix.is_empty() {
        return Err(MetricsError::EmptyMatrix {
            path: path.to_path_buf(),
        });
    }
    Ok(matrix)
}
