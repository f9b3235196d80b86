//! Binary cross-entropy over probabilities.

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

const CLAMP_EPS: f64 = 1e-7;

/// Mean of -(y ln p + (1-y) ln(1-p)) as a scalar tensor.
///
/// Probabilities are clamped to [1e-7, 1-1e-7] before the logs, so
/// perfect predictions stay finite. Differentiable with respect to `p`
/// only; `y` is treated as data.
pub fn bce_loss<E: Scalar>(p: &Tensor<E>, y: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
    if p.shape() != y.shape() {
        return Err(TensorError::shape(format!(
            "bce_loss: p {:?} vs y {:?}",
            p.shape(),
            y.shape()
        )));
    }
    let lo = E::from_f64(CLAMP_EPS);
    let hi = E::from_f64(1.0 - CLAMP_EPS);
    let n = p.len();
    let inv_n = E::one() / E::from_f64(n as f64);
    let mut total = E::zero();
    let mut clamped = Vec::with_capacity(n);
    for (&pv, &yv) in p.data().iter().zip(y.data()) {
        let pc = pv.max(lo).min(hi);
        clamped.push(pc);
        total = total - (yv * pc.ln() + (E::one() - yv) * (E::one() - pc).ln());
    }
    let y_data = y.data().to_vec();
    let p_raw = p.data().to_vec();
    Ok(Tensor::from_op(
        vec![],
        vec![total * inv_n],
        vec![p.clone()],
        Box::new(move |g, parents| {
            // d/dp mean BCE = (p - y) / (p (1-p)) / n on the unclamped
            // interior; zero where the clamp is active.
            let gp: Vec<E> = clamped
                .iter()
                .zip(&y_data)
                .zip(&p_raw)
                .map(|((&pc, &yv), &pv)| {
                    if pv < lo || pv > hi {
                        E::zero()
                    } else {
                        g[0] * (pc - yv) / (pc * (E::one() - pc)) * inv_n
                    }
                })
                .collect();
            parents[0].accumulate_grad(&gp);
        }),
    ))
}
