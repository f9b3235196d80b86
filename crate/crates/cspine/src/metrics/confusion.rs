//! Confusion matrix and the seven threshold metrics.

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Positive class = fracture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

pub fn confusion(preds: &[u8], truths: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != truths.len() || preds.is_empty() {
        return Err(MetricsError::Shape(format!(
            "{} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        match (p == 1, t == 1) {
            (true, true) => cm.true_pos += 1,
            (false, false) => cm.true_neg += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
        }
    }
    Ok(cm)
}

/// The seven threshold metrics as fractions. `None` marks a zero
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub f1: Option<f64>,
    pub acc: Option<f64>,
    pub mcc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(cm: &ConfusionMatrix) -> Result<BinaryMetrics, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::DegenerateMatrix);
    }
    let (tp, tn, fp, fne) = (cm.true_pos, cm.true_neg, cm.false_pos, cm.false_neg);
    let tpr = ratio(tp, tp + fne);
    let tnr = ratio(tn, tn + fp);
    let ppv = ratio(tp, tp + fp);
    let npv = ratio(tn, tn + fne);
    let f1 = match (ppv, tpr) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let acc = Some((tp + tn) as f64 / cm.total() as f64);
    let denom =
        (tp + fp) as f64 * (tp + fne) as f64 * (tn + fp) as f64 * (tn + fne) as f64;
    let mcc = (denom > 0.0)
        .then(|| ((tp * tn) as f64 - (fp * fne) as f64) / denom.sqrt());
    Ok(BinaryMetrics {
        tpr,
        tnr,
        ppv,
        npv,
        f1,
        acc,
        mcc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_and_inverted_predictions() {
        let truths = [1, 1, 1, 0, 0];
        let cm = confusion(&truths, &truths).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix { true_pos: 3, true_neg: 2, false_pos: 0, false_neg: 0 }
        );
        let inverted: Vec<u8> = truths.iter().map(|&t| 1 - t).collect();
        let cm = confusion(&inverted, &truths).unwrap();
        assert_eq!(cm.true_pos, 0);
        assert_eq!(cm.true_neg, 0);
        assert_eq!(cm.false_pos, 2);
        assert_eq!(cm.false_neg, 3);
    }

    #[test]
    fn random_pair_matches_enumeration_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let preds: Vec<u8> = (0..50).map(|_| rng.gen_range(0..=1)).collect();
        let truths: Vec<u8> = (0..50).map(|_| rng.gen_range(0..=1)).collect();
        let cm = confusion(&preds, &truths).unwrap();
        // direct count-by-enumeration
        let count = |p: u8, t: u8| {
            preds
                .iter()
                .zip(&truths)
                .filter(|(&a, &b)| a == p && b == t)
                .count() as u64
        };
        assert_eq!(cm.true_pos, count(1, 1));
        assert_eq!(cm.true_neg, count(0, 0));
        assert_eq!(cm.false_pos, count(1, 0));
        assert_eq!(cm.false_neg, count(0, 1));
        assert_eq!(cm.total(), 50);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(confusion(&[1, 0], &[1]), Err(MetricsError::Shape(_))));
        assert!(matches!(confusion(&[], &[]), Err(MetricsError::Shape(_))));
    }

    #[test]
    fn perfect_matrix_gives_all_ones() {
        let cm = ConfusionMatrix { true_pos: 10, true_neg: 10, false_pos: 0, false_neg: 0 };
        let m = binary_metrics(&cm).unwrap();
        for v in [m.tpr, m.tnr, m.ppv, m.npv, m.f1, m.acc, m.mcc] {
            assert_eq!(v, Some(1.0));
        }
    }

    #[test]
    fn chance_matrix() {
        let cm = ConfusionMatrix { true_pos: 5, true_neg: 5, false_pos: 5, false_neg: 5 };
        let m = binary_metrics(&cm).unwrap();
        assert_eq!(m.acc, Some(0.5));
        assert_eq!(m.mcc, Some(0.0));
    }

    #[test]
    fn worked_example_direct_formula() {
        let cm = ConfusionMatrix { true_pos: 6, true_neg: 3, false_pos: 1, false_neg: 2 };
        let m = binary_metrics(&cm).unwrap();
        assert!((m.ppv.unwrap() - 6.0 / 7.0).abs() < 1e-12);
        assert!((m.tpr.unwrap() - 0.75).abs() < 1e-12);
        assert!((m.f1.unwrap() - 0.8).abs() < 1e-12);
        assert!((m.mcc.unwrap() - 16.0 / 1120f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_denominators_are_undefined_not_zero() {
        // no actual positives: TPR and F1 undefined
        let cm = ConfusionMatrix { true_pos: 0, true_neg: 8, false_pos: 2, false_neg: 0 };
        let m = binary_metrics(&cm).unwrap();
        assert_eq!(m.tpr, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.mcc, None);
        assert_eq!(m.tnr, Some(0.8));
        assert_eq!(m.acc, Some(0.8));
        assert!(matches!(
            binary_metrics(&ConfusionMatrix::default()),
            Err(MetricsError::DegenerateMatrix)
        ));
    }

    #[test]
    fn mcc_invariant_under_class_swap() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let cm = ConfusionMatrix {
                true_pos: rng.gen_range(1..20),
                true_neg: rng.gen_range(1..20),
                false_pos: rng.gen_range(1..20),
                false_neg: rng.gen_range(1..20),
            };
            let swapped = ConfusionMatrix {
                true_pos: cm.true_neg,
                true_neg: cm.true_pos,
                false_pos: cm.false_neg,
                false_neg: cm.false_pos,
            };
            let a = binary_metrics(&cm).unwrap().mcc.unwrap();
            let b = binary_metrics(&swapped).unwrap().mcc.unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_lie_in_declared_ranges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let cm = ConfusionMatrix {
                true_pos: rng.gen_range(0..10),
                true_neg: rng.gen_range(0..10),
                false_pos: rng.gen_range(0..10),
                false_neg: rng.gen_range(0..10),
            };
            if cm.total() == 0 {
                continue;
            }
            let m = binary_metrics(&cm).unwrap();
            for v in [m.tpr, m.tnr, m.ppv, m.npv, m.f1, m.acc].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
            if let Some(mcc) = m.mcc {
                assert!((-1.0..=1.0).contains(&mcc));
            }
        }
    }
}
