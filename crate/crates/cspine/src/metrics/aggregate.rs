//! Cross-fold aggregation: mean ± sample std per metric, rendered in
//! percent with two decimals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{FoldMetrics, MetricsError, METRIC_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    /// In percent.
    pub mean: f64,
    /// Sample standard deviation (divisor K-1), in percent.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    /// None when fewer than 2 folds defined the metric.
    pub stat: Option<MeanStd>,
    /// Folds excluded because the metric was undefined there.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub k: usize,
    /// One cell per metric, in [`METRIC_NAMES`] order.
    pub cells: [AggregateCell; 8],
}

pub fn aggregate_folds(folds: &[FoldMetrics]) -> Result<AggregateReport, MetricsError> {
    let k = folds.len();
    if k < 2 {
        return Err(MetricsError::Param(format!("need at least 2 folds, got {k}")));
    }
    let cells = std::array::from_fn(|m| {
        let defined: Vec<f64> = folds
            .iter()
            .filter_map(|f| f.values[m])
            .map(|v| v * 100.0)
            .collect();
        let excluded = k - defined.len();
        let stat = (defined.len() >= 2).then(|| {
            let n = defined.len() as f64;
            let mean = defined.iter().sum::<f64>() / n;
            let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            MeanStd { mean, std: var.sqrt() }
        });
        AggregateCell { stat, excluded }
    });
    Ok(AggregateReport { k, cells })
}

impl AggregateCell {
    pub fn render(&self) -> String {
        let body = match self.stat {
            Some(MeanStd { mean, std }) => format!("{mean:.2}±{std:.2}"),
            None => "undef".to_string(),
        };
        if self.excluded > 0 {
            format!("{body} (-{})", self.excluded)
        } else {
            body
        }
    }
}

impl AggregateReport {
    /// Aligned plain-text table row set with the fixed column order.
    pub fn to_text(&self, label: &str) -> String {
        let width = 16;
        let mut out = String::new();
        let _ = write!(out, "{:<14}", "");
        for name in METRIC_NAMES {
            let _ = write!(out, "{name:>width$}");
        }
        out.push('\n');
        let _ = write!(out, "{label:<14}");
        for cell in &self.cells {
            let _ = write!(out, "{:>width$}", cell.render());
        }
        out.push('\n');
        out
    }
}
