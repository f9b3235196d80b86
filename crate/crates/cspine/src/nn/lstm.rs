//! LSTM cell and bidirectional layer over per-slice feature sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{uniform_fan_in, NnError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gate parameters of one LSTM direction.
///
/// `w_*` map the input, `u_*` the previous hidden state; gates are
/// input (i), forget (f), cell candidate (g), and output (o).
#[derive(Clone)]
pub struct LstmParams<E: Scalar> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_i: Tensor<E>,
    pub w_f: Tensor<E>,
    pub w_g: Tensor<E>,
    pub w_o: Tensor<E>,
    pub u_i: Tensor<E>,
    pub u_f: Tensor<E>,
    pub u_g: Tensor<E>,
    pub u_o: Tensor<E>,
    pub b_i: Tensor<E>,
    pub b_f: Tensor<E>,
    pub b_g: Tensor<E>,
    pub b_o: Tensor<E>,
}

impl<E: Scalar> LstmParams<E> {
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = |rng: &mut ChaCha8Rng| uniform_fan_in(&[input_dim, hidden_dim], input_dim, rng);
        let u = |rng: &mut ChaCha8Rng| uniform_fan_in(&[hidden_dim, hidden_dim], hidden_dim, rng);
        let b = |rng: &mut ChaCha8Rng| uniform_fan_in(&[hidden_dim], hidden_dim, rng);
        LstmParams {
            input_dim,
            hidden_dim,
            w_i: w(rng),
            w_f: w(rng),
            w_g: w(rng),
            w_o: w(rng),
            u_i: u(rng),
            u_f: u(rng),
            u_g: u(rng),
            u_o: u(rng),
            b_i: b(rng),
            b_f: b(rng),
            b_g: b(rng),
            b_o: b(rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[input_dim, hidden_dim]);
        let u = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        LstmParams {
            input_dim,
            hidden_dim,
            w_i: w(),
            w_f: w(),
            w_g: w(),
            w_o: w(),
            u_i: u(),
            u_f: u(),
            u_g: u(),
            u_o: u(),
            b_i: b(),
            b_f: b(),
            b_g: b(),
            b_o: b(),
        }
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        [
            ("w_i", &self.w_i),
            ("w_f", &self.w_f),
            ("w_g", &self.w_g),
            ("w_o", &self.w_o),
            ("u_i", &self.u_i),
            ("u_f", &self.u_f),
            ("u_g", &self.u_g),
            ("u_o", &self.u_o),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_g", &self.b_g),
            ("b_o", &self.b_o),
        ]
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
        .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<E>> {
        vec![
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_g,
            &mut self.w_o,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_g,
            &mut self.u_o,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_g,
            &mut self.b_o,
        ]
    }
}

/// One LSTM step over a batch:
/// i,f,o = sigmoid(xW + hU + b), g = tanh(xW + hU + b),
/// c_t = f*c + i*g, h_t = o*tanh(c_t).
pub fn lstm_step<E: Scalar>(
    x: &Tensor<E>,
    h_prev: &Tensor<E>,
    c_prev: &Tensor<E>,
    p: &LstmParams<E>,
) -> Result<(Tensor<E>, Tensor<E>), NnError> {
    let gate = |w: &Tensor<E>, u: &Tensor<E>, b: &Tensor<E>| -> Result<Tensor<E>, NnError> {
        Ok(x.affine(w, b)?.add(&h_prev.matmul(u)?)?)
    };
    let i = gate(&p.w_i, &p.u_i, &p.b_i)?.sigmoid();
    let f = gate(&p.w_f, &p.u_f, &p.b_f)?.sigmoid();
    let g = gate(&p.w_g, &p.u_g, &p.b_g)?.tanh_act();
    let o = gate(&p.w_o, &p.u_o, &p.b_o)?.sigmoid();
    let c_t = f.mul(c_prev)?.add(&i.mul(&g)?)?;
    let h_t = o.mul(&c_t.tanh_act())?;
    Ok((h_t, c_t))
}

/// Both directions of a bidirectional LSTM.
#[derive(Clone)]
pub struct BlstmParams<E: Scalar> {
    pub fwd: LstmParams<E>,
    pub bwd: LstmParams<E>,
}

impl<E: Scalar> BlstmParams<E> {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BlstmParams {
            fwd: LstmParams::init(input_dim, hidden_dim, &mut rng),
            bwd: LstmParams::init(input_dim, hidden_dim, &mut rng),
        }
    }
}

/// Case-level classifier: BLSTM readout plus an affine head to one logit.
#[derive(Clone)]
pub struct CaseClassifierParams<E: Scalar> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub blstm: BlstmParams<E>,
    pub head_weight: Tensor<E>,
    pub head_bias: Tensor<E>,
}

impl<E: Scalar> CaseClassifierParams<E> {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CaseClassifierParams {
            input_dim,
            hidden_dim,
            blstm: BlstmParams {
                fwd: LstmParams::init(input_dim, hidden_dim, &mut rng),
                bwd: LstmParams::init(input_dim, hidden_dim, &mut rng),
            },
            head_weight: uniform_fan_in(&[2 * hidden_dim, 1], 2 * hidden_dim, &mut rng),
            head_bias: uniform_fan_in(&[1], 2 * hidden_dim, &mut rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        CaseClassifierParams {
            input_dim,
            hidden_dim,
            blstm: BlstmParams {
                fwd: LstmParams::zeros(input_dim, hidden_dim),
                bwd: LstmParams::zeros(input_dim, hidden_dim),
            },
            head_weight: Tensor::zeros(&[2 * hidden_dim, 1]),
            head_bias: Tensor::zeros(&[1]),
        }
    }

    pub fn named(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.blstm.fwd.named("fwd");
        out.extend(self.blstm.bwd.named("bwd"));
        out.push(("head.w".to_string(), self.head_weight.clone()));
        out.push(("head.b".to_string(), self.head_bias.clone()));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<E>> {
        let mut out = self.blstm.fwd.params_mut();
        out.extend(self.blstm.bwd.params_mut());
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }
}

/// Per-batch-item 0/1 carry mask for step `t`: rows with `t < valid_len`
/// take the new state, others keep the previous one.
fn step_mask<E: Scalar>(valid_lens: &[usize], t: usize, hidden: usize) -> Tensor<E> {
    let batch = valid_lens.len();
    let mut data = vec![E::zero(); batch * hidden];
    for (b, &len) in valid_lens.iter().enumerate() {
        if t < len {
            for v in &mut data[b * hidden..(b + 1) * hidden] {
                *v = E::one();
            }
        }
    }
    Tensor::new(&[batch, hidden], data).expect("consistent shape")
}

fn masked_update<E: Scalar>(
    new: &Tensor<E>,
    prev: &Tensor<E>,
    mask: &Tensor<E>,
) -> Result<Tensor<E>, NnError> {
    let ones = Tensor::filled(mask.shape(), E::one());
    Ok(new.mul(mask)?.add(&prev.mul(&ones.sub(mask)?)?)?)
}

/// Run both LSTM directions over a padded batch of sequences and return
/// the concatenation of the forward direction's last valid hidden state
/// and the backward direction's state at t=0, shape [B, 2*hidden].
///
/// Padded positions beyond an item's valid length carry state through
/// unchanged.
pub fn blstm_forward<E: Scalar>(
    seq: &[Tensor<E>],
    fwd: &LstmParams<E>,
    bwd: &LstmParams<E>,
    valid_lens: &[usize],
) -> Result<Tensor<E>, NnError> {
    let n = seq.len();
    if n == 0 {
        return Err(NnError::EmptySequence);
    }
    let batch = seq[0].shape()[0];
    if valid_lens.len() != batch {
        return Err(NnError::Param(format!(
            "valid_lens has {} entries for batch {batch}",
            valid_lens.len()
        )));
    }
    if valid_lens.iter().any(|&l| l == 0 || l > n) {
        return Err(NnError::Param(format!(
            "valid lengths must be in [1, {n}]"
        )));
    }

    let hidden = fwd.hidden_dim;
    let mut h_f = Tensor::zeros(&[batch, hidden]);
    let mut c_f = Tensor::zeros(&[batch, hidden]);
    for (t, x) in seq.iter().enumerate() {
        let (h_new, c_new) = lstm_step(x, &h_f, &c_f, fwd)?;
        let mask = step_mask(valid_lens, t, hidden);
        h_f = masked_update(&h_new, &h_f, &mask)?;
        c_f = masked_update(&c_new, &c_f, &mask)?;
    }

    let hidden_b = bwd.hidden_dim;
    let mut h_b = Tensor::zeros(&[batch, hidden_b]);
    let mut c_b = Tensor::zeros(&[batch, hidden_b]);
    for (t, x) in seq.iter().enumerate().rev() {
        let (h_new, c_new) = lstm_step(x, &h_b, &c_b, bwd)?;
        let mask = step_mask(valid_lens, t, hidden_b);
        h_b = masked_update(&h_new, &h_b, &mask)?;
        c_b = masked_update(&c_new, &c_b, &mask)?;
    }

    Ok(h_f.concat_cols(&h_b)?)
}
