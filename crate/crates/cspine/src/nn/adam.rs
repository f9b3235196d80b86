//! Adam with a step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs between learning-rate drops.
    pub decay_period: usize,
    /// Multiplier applied at each drop.
    pub decay_gamma: f64,
}

impl AdamConfig {
    pub fn with_lr(base_lr: f64) -> Self {
        AdamConfig {
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_period: 5,
            decay_gamma: 0.2,
        }
    }
}

/// First/second moment buffers plus the step counter.
pub struct AdamState<E: Scalar> {
    pub config: AdamConfig,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    pub t: u64,
}

impl<E: Scalar> AdamState<E> {
    pub fn new(params: &[&mut Tensor<E>], config: AdamConfig) -> Self {
        assert!(config.decay_gamma > 0.0 && config.decay_gamma <= 1.0);
        AdamState {
            config,
            m: params.iter().map(|p| vec![E::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![E::zero(); p.len()]).collect(),
            t: 0,
        }
    }

    /// lr(epoch) = base * gamma^floor(epoch / period).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = if self.config.decay_period == 0 {
            0
        } else {
            epoch / self.config.decay_period
        };
        self.config.base_lr * self.config.decay_gamma.powi(drops as i32)
    }

    /// One Adam update over `params`, consuming their gradients.
    ///
    /// Every parameter must have a populated gradient. Parameters are
    /// replaced with fresh leaf tensors (grads cleared).
    pub fn step(&mut self, params: &mut [&mut Tensor<E>], epoch: usize) -> Result<(), NnError> {
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                return Err(NnError::MissingGradient(format!("#{i} shape {:?}", p.shape())));
            }
            debug_assert_eq!(self.m[i].len(), p.len());
        }
        self.t += 1;
        let lr = E::from_f64(self.lr_at(epoch));
        let b1 = E::from_f64(self.config.beta1);
        let b2 = E::from_f64(self.config.beta2);
        let eps = E::from_f64(self.config.eps);
        let bc1 = E::one() - E::from_f64(self.config.beta1.powi(self.t as i32));
        let bc2 = E::one() - E::from_f64(self.config.beta2.powi(self.t as i32));

        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad().expect("checked above");
            let mut data = p.data().to_vec();
            for (j, &g) in grad.iter().enumerate() {
                let m = b1 * self.m[i][j] + (E::one() - b1) * g;
                let v = b2 * self.v[i][j] + (E::one() - b2) * g * g;
                self.m[i][j] = m;
                self.v[i][j] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            **p = Tensor::param(p.shape(), data).expect("same shape");
        }
        Ok(())
    }
}
