//! Finite-difference verification of analytic gradients.

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Per-parameter comparison of analytic vs. central-difference gradients.
#[derive(Debug, Clone)]
pub struct ParamGradDiff {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub params: Vec<ParamGradDiff>,
    pub pass: bool,
}

/// Compare analytic gradients of `loss_fn` against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` per coordinate.
///
/// The loss must be deterministic; two base evaluations are compared to
/// detect violations. Relative differences use an absolute floor of 1e-4
/// in the denominator: central differences of an O(1) loss carry ~1e-10
/// of rounding noise, so coordinates whose true gradient is near zero
/// (dead ReLU paths, saturated gates) are in effect compared absolutely
/// at rtol * 1e-4 instead of against the noise.
pub fn grad_check<E, F>(
    loss_fn: F,
    params: &[Tensor<E>],
    epsilon: f64,
    rtol: f64,
) -> Result<GradReport, TensorError>
where
    E: Scalar,
    F: Fn(&[Tensor<E>]) -> Tensor<E>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");

    let base = loss_fn(params).item().as_f64();
    let again = loss_fn(params).item().as_f64();
    if base != again {
        return Err(TensorError::NondeterministicLoss(base, again));
    }

    // Analytic pass.
    for p in params {
        p.zero_grad();
    }
    let loss = loss_fn(params);
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            p.grad()
                .map(|g| g.iter().map(|v| v.as_f64()).collect())
                .unwrap_or_else(|| vec![0.0; p.len()])
        })
        .collect();

    let eval_perturbed = |param_idx: usize, coord: usize, delta: f64| -> f64 {
        let perturbed: Vec<Tensor<E>> = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == param_idx {
                    let mut data = p.data().to_vec();
                    data[coord] = data[coord] + E::from_f64(delta);
                    Tensor::new(p.shape(), data).expect("same shape")
                } else {
                    p.detached()
                }
            })
            .collect();
        loss_fn(&perturbed).item().as_f64()
    };

    let mut reports = Vec::with_capacity(params.len());
    let mut all_pass = true;
    for (pi, p) in params.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for coord in 0..p.len() {
            let plus = eval_perturbed(pi, coord, epsilon);
            let minus = eval_perturbed(pi, coord, -epsilon);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[pi][coord];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(1e-4);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        let pass = max_rel <= rtol;
        all_pass &= pass;
        reports.push(ParamGradDiff {
            max_abs_diff: max_abs,
            max_rel_diff: max_rel,
            pass,
        });
    }
    Ok(GradReport {
        params: reports,
        pass: all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_passes() {
        let x = Tensor::<f64>::param(&[3], vec![0.3, -1.2, 2.0]).unwrap();
        let report = grad_check(
            |ps| ps[0].mul(&ps[0]).unwrap().sum(),
            &[x],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn wrong_backward_rule_fails() {
        // Forward is x^2 but the recorded rule claims d/dx = 1.
        let x = Tensor::<f64>::param(&[2], vec![1.5, -0.7]).unwrap();
        let broken = |ps: &[Tensor<f64>]| {
            let p = &ps[0];
            let data: Vec<f64> = p.data().iter().map(|v| v * v).collect();
            Tensor::from_op(
                p.shape().to_vec(),
                data,
                vec![p.clone()],
                Box::new(|g, parents| parents[0].accumulate_grad(g)),
            )
            .sum()
        };
        let report = grad_check(broken, &[x], 1e-5, 1e-5).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn nondeterministic_loss_detected() {
        use std::cell::Cell;
        let counter = Cell::new(0.0f64);
        let x = Tensor::<f64>::param(&[1], vec![1.0]).unwrap();
        let err = grad_check(
            |ps| {
                counter.set(counter.get() + 1.0);
                ps[0].scale(counter.get()).sum()
            },
            &[x],
            1e-5,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::NondeterministicLoss(_, _)));
    }
}
