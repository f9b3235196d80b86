//! ROC curve by threshold sweep and trapezoid AUC.

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Classify positive when score >= threshold.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC by sweeping thresholds over the distinct scores (descending),
/// with the trapezoid-rule AUC. Equals the pairwise ranking statistic
/// P(s+ > s-) + 0.5 P(s+ = s-).
pub fn roc_auc(scores: &[f64], truths: &[u8]) -> Result<(f64, Vec<RocPoint>), MetricsError> {
    if scores.len() != truths.len() {
        return Err(MetricsError::Shape(format!(
            "{} scores vs {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricsError::Param("NaN score".into()));
    }
    let n_pos = truths.iter().filter(|&&t| t == 1).count();
    let n_neg = truths.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateTestSet);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // consume the whole tied group at this threshold
        while i < order.len() && scores[order[i]] == t {
            if truths[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / n_pos as f64;
        let fpr = fp as f64 / n_neg as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        points.push(RocPoint { threshold: t, fpr, tpr });
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    Ok((auc, points))
}

/// ROC points as CSV with a header row.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}
