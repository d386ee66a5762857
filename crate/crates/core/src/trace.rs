//! Per-step training records shared by the optimizers and experiments.

use crate::numcore::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub l1: f64,
    /// Distance to a reference point (ground truth, target), when one exists.
    pub dist: Option<f64>,
    pub sign_flips: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Gradient evaluations spent, extra SAM evaluations included.
    pub grad_calls: usize,
}

impl RunTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn total_flips(&self) -> usize {
        self.rows.iter().map(|r| r.sign_flips).sum()
    }

    pub fn mean_l1(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.l1).sum::<f64>() / self.rows.len() as f64
    }
}

/// Euclidean distance, for populating [`TraceRow::dist`].
pub fn distance(a: &ParamVector, b: &ParamVector) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
