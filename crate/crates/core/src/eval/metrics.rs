//! Confusion counts and classification metrics, LMI-as-positive.

use crate::error::{Result, ScdmError};
use serde::{Deserialize, Serialize};

/// Raw confusion counts. LMI is the positive class throughout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Pool counts from another evaluation into this one.
    pub fn absorb(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn record(&mut self, truth_positive: bool, predicted_positive: bool) {
        match (truth_positive, predicted_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// The four report metrics as fractions in [0, 1]. A `None` marks an
/// undefined ratio (zero denominator), never silently coerced to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub pre: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn metrics(counts: &ConfusionCounts) -> MetricsReport {
    MetricsReport {
        acc: ratio(counts.tp + counts.tn, counts.total()),
        sen: ratio(counts.tp, counts.tp + counts.fn_),
        spe: ratio(counts.tn, counts.tn + counts.fp),
        pre: ratio(counts.tp, counts.tp + counts.fp),
    }
}

impl MetricsReport {
    /// Percent with two decimals, or empty for undefined.
    pub fn fmt_pct(value: Option<f64>) -> String {
        match value {
            Some(v) => format!("{:.2}", v * 100.0),
            None => String::new(),
        }
    }

    /// Parse a percent cell written by `fmt_pct`.
    pub fn parse_pct(cell: &str) -> Result<Option<f64>> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Ok(None);
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| ScdmError::invalid(format!("bad metric cell {cell:?}")))?;
        Ok(Some(v))
    }
}
