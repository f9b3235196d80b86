//! Inverted dropout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Zero each element with probability `p` and scale survivors by
/// 1/(1-p) during training; identity at inference.
pub fn dropout<E: Scalar>(
    x: &Tensor<E>,
    p: f64,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<E>, NnError> {
    if !(0.0..1.0).contains(&p) {
        return Err(NnError::Param(format!("dropout p must be in [0,1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep_scale = E::from_f64(1.0 / (1.0 - p));
    let mask: Vec<E> = (0..x.len())
        .map(|_| {
            if rng.gen_range(0.0..1.0) < p {
                E::zero()
            } else {
                keep_scale
            }
        })
        .collect();
    let mask = Tensor::new(x.shape(), mask).expect("consistent shape");
    Ok(x.mul(&mask)?)
}
