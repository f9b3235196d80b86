//! Confusion-matrix statistics, ROC/AUC, and cross-fold aggregation.

mod aggregate;
mod confusion;
mod roc;

pub use aggregate::{aggregate_folds, AggregateCell, AggregateReport, MeanStd};
pub use confusion::{binary_metrics, confusion, BinaryMetrics, ConfusionMatrix};
pub use roc::{roc_auc, roc_csv, RocPoint};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("all-zero confusion matrix")]
    DegenerateMatrix,
    #[error("need at least one positive and one negative")]
    DegenerateTestSet,
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Column order of every report: TPR, TNR, PPV, NPV, F1, Acc, MCC, AUC.
pub const METRIC_NAMES: [&str; 8] = ["TPR", "TNR", "PPV", "NPV", "F1", "Acc", "MCC", "AUC"];

/// One fold's metrics as fractions (MCC in [-1,1], the rest in [0,1]),
/// in [`METRIC_NAMES`] order. `None` marks an undefined value (zero
/// denominator) — never silently 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub values: [Option<f64>; 8],
}

impl FoldMetrics {
    pub fn from_parts(bm: &BinaryMetrics, auc: Option<f64>) -> Self {
        FoldMetrics {
            values: [bm.tpr, bm.tnr, bm.ppv, bm.npv, bm.f1, bm.acc, bm.mcc, auc],
        }
    }
}
