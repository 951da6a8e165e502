//! Per-iteration training diagnostics.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based outer iteration.
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_gap(&self) -> Option<f64> {
        self.rows.first().map(|r| r.gap)
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `gap(t) / gap(1)` for the last recorded iteration.
    pub fn final_ratio(&self) -> Option<f64> {
        let first = self.first_gap()?;
        let last = self.last()?.gap;
        Some(if first > 0.0 { last / first } else { 0.0 })
    }

    /// CSV with columns `iter,primal,dual,gap,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,primal,dual,gap,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:.6}\n",
                r.iter, r.primal, r.dual, r.gap, r.seconds
            ));
        }
        out
    }
}

/// Receives trace rows as training progresses.
pub trait ProgressSink {
    fn record(&mut self, row: &TraceRow);
}

impl<F: FnMut(&TraceRow)> ProgressSink for F {
    fn record(&mut self, row: &TraceRow) {
        self(row)
    }
}

/// Sink that discards everything.
pub struct NoProgress;

impl ProgressSink for NoProgress {
    fn record(&mut self, _row: &TraceRow) {}
}

/// Gaps at or below this fraction of the objective scale count as zero.
pub const GAP_FLOOR: f64 = 1e-12;

/// `gap(t) < ε · gap(1)`. A gap that is zero up to rounding
/// (`≤ GAP_FLOOR · scale`) also satisfies it, so an iterate that is already
/// optimal stops the run.
pub fn gap_criterion_met(gap: f64, first_gap: f64, eps: f64, scale: f64) -> bool {
    let floor = GAP_FLOOR * scale.abs().max(1.0);
    if first_gap <= floor || gap <= floor {
        return true;
    }
    gap < eps * first_gap
}
