use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One training iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub loss_ccm: f64,
    pub loss_gan: f64,
    pub kdc_final: f64,
    pub teacher_iters: usize,
    pub u: f64,
    pub t: f64,
    /// Wall time of the iteration; the only non-deterministic column.
    pub ms: f64,
}

/// Append-only per-iteration training record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    rows: Vec<LogRow>,
}

pub const RUNLOG_HEADER: [&str; 8] = [
    "iteration",
    "loss_ccm",
    "loss_gan",
    "kdc_final",
    "teacher_iters",
    "u",
    "t",
    "ms",
];

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; iteration indices must strictly increase.
    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Internal(format!(
                    "run log iteration {} after {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(RUNLOG_HEADER)?;
        for r in &self.rows {
            wr.write_record([
                r.iteration.to_string(),
                r.loss_ccm.to_string(),
                r.loss_gan.to_string(),
                r.kdc_final.to_string(),
                r.teacher_iters.to_string(),
                r.u.to_string(),
                r.t.to_string(),
                format!("{:.3}", r.ms),
            ])?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Mean teacher iterations over rows whose `t` falls in `[lo, hi)`,
    /// restricted to iterations at or after `from_iteration`.
    pub fn mean_teacher_iters(&self, lo: f64, hi: f64, from_iteration: u64) -> Option<f64> {
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.iteration >= from_iteration && r.t >= lo && r.t < hi)
            .map(|r| r.teacher_iters as f64)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }
}
