//! Elementwise, linear-algebra, and reduction ops with backward rules.

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Pointwise nonlinearities with standard derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply<E: Scalar>(self, x: E) -> E {
        match self {
            Activation::Relu => {
                if x > E::zero() {
                    x
                } else {
                    E::zero()
                }
            }
            Activation::Sigmoid => E::one() / (E::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the output value y = f(x).
    fn derivative_from_output<E: Scalar>(self, y: E) -> E {
        match self {
            Activation::Relu => {
                if y > E::zero() {
                    E::one()
                } else {
                    E::zero()
                }
            }
            Activation::Sigmoid => y * (E::one() - y),
            Activation::Tanh => E::one() - y * y,
        }
    }
}

impl<E: Scalar> Tensor<E> {
    fn check_same_shape(&self, other: &Tensor<E>, op: &str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                parents[0].accumulate_grad(g);
                parents[1].accumulate_grad(g);
            }),
        ))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.add(&other.scale(-E::one()))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        self.check_same_shape(other, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let ga: Vec<E> = g
                    .iter()
                    .zip(parents[1].data())
                    .map(|(&go, &b)| go * b)
                    .collect();
                let gb: Vec<E> = g
                    .iter()
                    .zip(parents[0].data())
                    .map(|(&go, &a)| go * a)
                    .collect();
                parents[0].accumulate_grad(&ga);
                parents[1].accumulate_grad(&gb);
            }),
        ))
    }

    pub fn scale(&self, k: E) -> Tensor<E> {
        let data = self.data().iter().map(|&a| a * k).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let gp: Vec<E> = g.iter().map(|&go| go * k).collect();
                parents[0].accumulate_grad(&gp);
            }),
        )
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor<E> {
        let total = self.data().iter().copied().sum();
        let n = self.len();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate_grad(&vec![g[0]; n]);
            }),
        )
    }

    /// Mean of all elements as a scalar tensor.
    pub fn mean(&self) -> Tensor<E> {
        let n = E::from_f64(self.len() as f64);
        self.sum().scale(E::one() / n)
    }

    pub fn elementwise(&self, f: Activation) -> Tensor<E> {
        let out: Vec<E> = self.data().iter().map(|&x| f.apply(x)).collect();
        let saved = out.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let gp: Vec<E> = g
                    .iter()
                    .zip(&saved)
                    .map(|(&go, &y)| go * f.derivative_from_output(y))
                    .collect();
                parents[0].accumulate_grad(&gp);
            }),
        )
    }

    pub fn relu(&self) -> Tensor<E> {
        self.elementwise(Activation::Relu)
    }

    pub fn sigmoid(&self) -> Tensor<E> {
        self.elementwise(Activation::Sigmoid)
    }

    pub fn tanh_act(&self) -> Tensor<E> {
        self.elementwise(Activation::Tanh)
    }

    /// `input[N,D] . weight[D,M] + bias[M]`, broadcast over rows.
    pub fn affine(&self, weight: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        if self.shape().len() != 2 || weight.shape().len() != 2 {
            return Err(TensorError::shape(format!(
                "affine expects 2-d input and weight, got {:?} and {:?}",
                self.shape(),
                weight.shape()
            )));
        }
        let (n, d) = (self.shape()[0], self.shape()[1]);
        let (dw, m) = (weight.shape()[0], weight.shape()[1]);
        if d != dw || bias.shape() != [m] {
            return Err(TensorError::shape(format!(
                "affine: input {:?}, weight {:?}, bias {:?}",
                self.shape(),
                weight.shape(),
                bias.shape()
            )));
        }
        let x = self.data();
        let w = weight.data();
        let b = bias.data();
        let mut out = vec![E::zero(); n * m];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let out_row = &mut out[i * m..(i + 1) * m];
            out_row.copy_from_slice(b);
            for (k, &xv) in row.iter().enumerate() {
                let wrow = &w[k * m..(k + 1) * m];
                for (o, &wv) in out_row.iter_mut().zip(wrow) {
                    *o = *o + xv * wv;
                }
            }
        }
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].data();
                let w = parents[1].data();
                // dX = g . W^T
                let mut gx = vec![E::zero(); n * d];
                for i in 0..n {
                    for k in 0..d {
                        let mut acc = E::zero();
                        let grow = &g[i * m..(i + 1) * m];
                        let wrow = &w[k * m..(k + 1) * m];
                        for (gv, wv) in grow.iter().zip(wrow) {
                            acc = acc + *gv * *wv;
                        }
                        gx[i * d + k] = acc;
                    }
                }
                // dW = X^T . g
                let mut gw = vec![E::zero(); d * m];
                for i in 0..n {
                    let xrow = &x[i * d..(i + 1) * d];
                    let grow = &g[i * m..(i + 1) * m];
                    for (k, &xv) in xrow.iter().enumerate() {
                        let gwrow = &mut gw[k * m..(k + 1) * m];
                        for (o, &gv) in gwrow.iter_mut().zip(grow) {
                            *o = *o + xv * gv;
                        }
                    }
                }
                // dB = column sums of g
                let mut gb = vec![E::zero(); m];
                for i in 0..n {
                    for j in 0..m {
                        gb[j] = gb[j] + g[i * m + j];
                    }
                }
                parents[0].accumulate_grad(&gx);
                parents[1].accumulate_grad(&gw);
                parents[2].accumulate_grad(&gb);
            }),
        ))
    }

    /// Matrix product without bias.
    pub fn matmul(&self, weight: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        let m = weight
            .shape()
            .last()
            .copied()
            .ok_or_else(|| TensorError::shape("matmul: weight must be 2-d".to_string()))?;
        self.affine(weight, &Tensor::zeros(&[m]))
    }

    /// Concatenate two matrices along columns: [N,A] ++ [N,B] -> [N,A+B].
    pub fn concat_cols(&self, other: &Tensor<E>) -> Result<Tensor<E>, TensorError> {
        if self.shape().len() != 2 || other.shape().len() != 2 || self.shape()[0] != other.shape()[0]
        {
            return Err(TensorError::shape(format!(
                "concat_cols: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let n = self.shape()[0];
        let (a, b) = (self.shape()[1], other.shape()[1]);
        let mut out = Vec::with_capacity(n * (a + b));
        for i in 0..n {
            out.extend_from_slice(&self.data()[i * a..(i + 1) * a]);
            out.extend_from_slice(&other.data()[i * b..(i + 1) * b]);
        }
        Ok(Tensor::from_op(
            vec![n, a + b],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, parents| {
                let mut ga = vec![E::zero(); n * a];
                let mut gb = vec![E::zero(); n * b];
                for i in 0..n {
                    ga[i * a..(i + 1) * a].copy_from_slice(&g[i * (a + b)..i * (a + b) + a]);
                    gb[i * b..(i + 1) * b].copy_from_slice(&g[i * (a + b) + a..(i + 1) * (a + b)]);
                }
                parents[0].accumulate_grad(&ga);
                parents[1].accumulate_grad(&gb);
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn affine_identity_weight_zero_bias() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(&[2]);
        let y = x.affine(&w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn affine_zero_weight_gives_bias_rows() {
        let x = t(&[3, 2], &[1.0; 6]);
        let w = Tensor::zeros(&[2, 2]);
        let b = t(&[2], &[5.0, -1.0]);
        let y = x.affine(&w, &b).unwrap();
        assert_eq!(y.data(), &[5.0, -1.0, 5.0, -1.0, 5.0, -1.0]);
    }

    #[test]
    fn affine_hand_example() {
        // [1,2] . [[1,0],[0,3]] + [1,1] = [2,7]
        let x = t(&[1, 2], &[1.0, 2.0]);
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 3.0]);
        let b = t(&[2], &[1.0, 1.0]);
        let y = x.affine(&w, &b).unwrap();
        assert_eq!(y.data(), &[2.0, 7.0]);
    }

    #[test]
    fn affine_dimension_mismatch() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[2, 2], &[1.0; 4]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(x.affine(&w, &b), Err(TensorError::Shape(_))));
    }

    #[test]
    fn activations_spot_values() {
        let x = t(&[3], &[-3.0, 0.0, 3.0]);
        assert_eq!(x.relu().data(), &[0.0, 0.0, 3.0]);
        assert_eq!(t(&[1], &[0.0]).sigmoid().data()[0], 0.5);
        let y = t(&[1], &[0.5]).tanh_act();
        assert!((y.data()[0] - 0.462117).abs() < 1e-6);
    }

    #[test]
    fn concat_cols_layout_and_backward() {
        let a = Tensor::<f64>::param(&[2, 1], vec![1.0, 2.0]).unwrap();
        let b = Tensor::<f64>::param(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        c.scale(2.0).sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![2.0; 4]);
    }
}
