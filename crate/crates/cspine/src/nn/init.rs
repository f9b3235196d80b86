//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform(-k, k) with k = 1/sqrt(fan_in), as a trainable parameter.
///
/// Samples are drawn in f64 so f32 and f64 models built from the same
/// seed see the same underlying values.
pub fn uniform_fan_in<E: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<E> {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<E> = (0..n)
        .map(|_| E::from_f64(rng.gen_range(-k..k)))
        .collect();
    Tensor::param(shape, data).expect("consistent shape")
}
