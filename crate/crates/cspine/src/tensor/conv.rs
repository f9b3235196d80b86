//! Convolution and pooling, NCHW, zero padding.
//!
//! Batch items are independent, so forward and input-gradient loops run
//! in parallel over the batch with disjoint output slices; results are
//! bit-identical to the sequential order.

use rayon::prelude::*;

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

fn dims4<E: Scalar>(t: &Tensor<E>, what: &str) -> Result<[usize; 4], TensorError> {
    match t.shape() {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        other => Err(TensorError::shape(format!(
            "{what} must be 4-d, got {other:?}"
        ))),
    }
}

/// Valid output range along one axis so that `o*stride + k_off - pad`
/// stays inside `[0, extent)`.
#[inline]
fn out_range(out_len: usize, stride: usize, k_off: usize, pad: usize, extent: usize) -> (usize, usize) {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off).div_ceil(stride)
    };
    let hi_num = extent + pad;
    if hi_num <= k_off {
        return (1, 0); // empty
    }
    let hi = ((hi_num - 1 - k_off) / stride + 1).min(out_len);
    (lo, hi)
}

struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

fn conv_forward_one<E: Scalar>(input_n: &[E], kernel: &[E], bias: &[E], out_n: &mut [E], d: &ConvDims) {
    for f in 0..d.f {
        let out_f = &mut out_n[f * d.oh * d.ow..(f + 1) * d.oh * d.ow];
        for v in out_f.iter_mut() {
            *v = bias[f];
        }
        for c in 0..d.c {
            let in_c = &input_n[c * d.h * d.w..(c + 1) * d.h * d.w];
            for ki in 0..d.kh {
                let (oh_lo, oh_hi) = out_range(d.oh, d.stride, ki, d.pad, d.h);
                for kj in 0..d.kw {
                    let wv = kernel[((f * d.c + c) * d.kh + ki) * d.kw + kj];
                    if wv == E::zero() {
                        continue;
                    }
                    let (ow_lo, ow_hi) = out_range(d.ow, d.stride, kj, d.pad, d.w);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * d.stride + ki - d.pad;
                        let in_row = &in_c[ih * d.w..(ih + 1) * d.w];
                        let out_row = &mut out_f[oh * d.ow..(oh + 1) * d.ow];
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        if d.stride == 1 {
                            let base = ow_lo + kj - d.pad;
                            for (o, &x) in out_row[ow_lo..ow_hi]
                                .iter_mut()
                                .zip(&in_row[base..base + (ow_hi - ow_lo)])
                            {
                                *o = *o + wv * x;
                            }
                        } else {
                            for ow in ow_lo..ow_hi {
                                let iw = ow * d.stride + kj - d.pad;
                                out_row[ow] = out_row[ow] + wv * in_row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<E: Scalar> Tensor<E> {
    /// 2-d cross-correlation with zero padding.
    ///
    /// Differentiable with respect to input, kernel, and bias.
    pub fn conv2d(
        &self,
        kernel: &Tensor<E>,
        bias: &Tensor<E>,
        stride: usize,
        padding: usize,
    ) -> Result<Tensor<E>, TensorError> {
        let [n, c, h, w] = dims4(self, "conv2d input")?;
        let [f, kc, kh, kw] = dims4(kernel, "conv2d kernel")?;
        if kc != c {
            return Err(TensorError::shape(format!(
                "conv2d: input channels {c} (shape {:?}) != kernel channels {kc} (shape {:?})",
                self.shape(),
                kernel.shape()
            )));
        }
        if bias.shape() != [f] {
            return Err(TensorError::shape(format!(
                "conv2d: bias shape {:?} != [{f}]",
                bias.shape()
            )));
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::shape(format!(
                "conv2d: kernel {kh}x{kw} exceeds padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        if stride == 0 {
            return Err(TensorError::shape("conv2d: stride must be positive".to_string()));
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let d = ConvDims {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            oh,
            ow,
            stride,
            pad: padding,
        };

        let mut out = vec![E::zero(); n * f * oh * ow];
        let xdata = self.data();
        let kdata = kernel.data();
        let bdata = bias.data();
        let in_stride = c * h * w;
        out.par_chunks_mut(f * oh * ow)
            .enumerate()
            .for_each(|(i, out_n)| {
                conv_forward_one(&xdata[i * in_stride..(i + 1) * in_stride], kdata, bdata, out_n, &d);
            });

        Ok(Tensor::from_op(
            vec![n, f, oh, ow],
            out,
            vec![self.clone(), kernel.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let input = parents[0].data();
                let kernel = parents[1].data();
                conv_backward(g, input, kernel, &d, &parents[0], &parents[1], &parents[2]);
            }),
        ))
    }

    /// Max pooling over k-by-k windows. Gradient routes to the argmax
    /// cell; ties break to the lowest flat index.
    pub fn max_pool2d(&self, k: usize, stride: usize) -> Result<Tensor<E>, TensorError> {
        let [n, c, h, w] = dims4(self, "max_pool2d input")?;
        if k == 0 || stride == 0 {
            return Err(TensorError::shape(
                "max_pool2d: k and stride must be positive".to_string(),
            ));
        }
        if k > h || k > w {
            return Err(TensorError::shape(format!(
                "max_pool2d: window {k} exceeds spatial extent {h}x{w}"
            )));
        }
        let oh = (h - k) / stride + 1;
        let ow = (w - k) / stride + 1;
        let x = self.data();
        let mut out = vec![E::zero(); n * c * oh * ow];
        let mut argmax = vec![0usize; n * c * oh * ow];
        for nc in 0..n * c {
            let plane = &x[nc * h * w..(nc + 1) * h * w];
            for o_h in 0..oh {
                for o_w in 0..ow {
                    let mut best_idx = o_h * stride * w + o_w * stride;
                    let mut best = plane[best_idx];
                    for i in 0..k {
                        for j in 0..k {
                            let idx = (o_h * stride + i) * w + (o_w * stride + j);
                            if plane[idx] > best {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out[nc * oh * ow + o_h * ow + o_w] = best;
                    argmax[nc * oh * ow + o_h * ow + o_w] = nc * h * w + best_idx;
                }
            }
        }
        let in_len = self.len();
        Ok(Tensor::from_op(
            vec![n, c, oh, ow],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![E::zero(); in_len];
                for (go, &src) in g.iter().zip(&argmax) {
                    gx[src] = gx[src] + *go;
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }

    /// Mean over the spatial dimensions: [N,C,H,W] -> [N,C].
    pub fn global_avg_pool(&self) -> Result<Tensor<E>, TensorError> {
        let [n, c, h, w] = dims4(self, "global_avg_pool input")?;
        if h * w == 0 {
            return Err(TensorError::shape(
                "global_avg_pool: empty spatial extent".to_string(),
            ));
        }
        let x = self.data();
        let inv = E::one() / E::from_f64((h * w) as f64);
        let mut out = vec![E::zero(); n * c];
        for nc in 0..n * c {
            let s: E = x[nc * h * w..(nc + 1) * h * w].iter().copied().sum();
            out[nc] = s * inv;
        }
        Ok(Tensor::from_op(
            vec![n, c],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = vec![E::zero(); n * c * h * w];
                for nc in 0..n * c {
                    let gv = g[nc] * inv;
                    for v in &mut gx[nc * h * w..(nc + 1) * h * w] {
                        *v = gv;
                    }
                }
                parents[0].accumulate_grad(&gx);
            }),
        ))
    }
}

fn conv_backward<E: Scalar>(
    g: &[E],
    input: &[E],
    kernel: &[E],
    d: &ConvDims,
    p_input: &Tensor<E>,
    p_kernel: &Tensor<E>,
    p_bias: &Tensor<E>,
) {
    let in_stride = d.c * d.h * d.w;
    let out_stride = d.f * d.oh * d.ow;

    if p_input.tracked() {
        let mut gx = vec![E::zero(); d.n * in_stride];
        gx.par_chunks_mut(in_stride).enumerate().for_each(|(b, gx_n)| {
            let g_n = &g[b * out_stride..(b + 1) * out_stride];
            for f in 0..d.f {
                let g_f = &g_n[f * d.oh * d.ow..(f + 1) * d.oh * d.ow];
                for c in 0..d.c {
                    let gx_c = &mut gx_n[c * d.h * d.w..(c + 1) * d.h * d.w];
                    for ki in 0..d.kh {
                        let (oh_lo, oh_hi) = out_range(d.oh, d.stride, ki, d.pad, d.h);
                        for kj in 0..d.kw {
                            let wv = kernel[((f * d.c + c) * d.kh + ki) * d.kw + kj];
                            if wv == E::zero() {
                                continue;
                            }
                            let (ow_lo, ow_hi) = out_range(d.ow, d.stride, kj, d.pad, d.w);
                            for oh in oh_lo..oh_hi {
                                let ih = oh * d.stride + ki - d.pad;
                                for ow in ow_lo..ow_hi {
                                    let iw = ow * d.stride + kj - d.pad;
                                    let idx = ih * d.w + iw;
                                    gx_c[idx] = gx_c[idx] + wv * g_f[oh * d.ow + ow];
                                }
                            }
                        }
                    }
                }
            }
        });
        p_input.accumulate_grad(&gx);
    }

    if p_kernel.tracked() {
        let mut gk = vec![E::zero(); d.f * d.c * d.kh * d.kw];
        gk.par_chunks_mut(d.c * d.kh * d.kw)
            .enumerate()
            .for_each(|(f, gk_f)| {
                for b in 0..d.n {
                    let g_f = &g[b * out_stride + f * d.oh * d.ow..b * out_stride + (f + 1) * d.oh * d.ow];
                    let in_n = &input[b * in_stride..(b + 1) * in_stride];
                    for c in 0..d.c {
                        let in_c = &in_n[c * d.h * d.w..(c + 1) * d.h * d.w];
                        for ki in 0..d.kh {
                            let (oh_lo, oh_hi) = out_range(d.oh, d.stride, ki, d.pad, d.h);
                            for kj in 0..d.kw {
                                let (ow_lo, ow_hi) = out_range(d.ow, d.stride, kj, d.pad, d.w);
                                let mut acc = E::zero();
                                for oh in oh_lo..oh_hi {
                                    let ih = oh * d.stride + ki - d.pad;
                                    for ow in ow_lo..ow_hi {
                                        let iw = ow * d.stride + kj - d.pad;
                                        acc = acc + g_f[oh * d.ow + ow] * in_c[ih * d.w + iw];
                                    }
                                }
                                let idx = (c * d.kh + ki) * d.kw + kj;
                                gk_f[idx] = gk_f[idx] + acc;
                            }
                        }
                    }
                }
            });
        p_kernel.accumulate_grad(&gk);
    }

    if p_bias.tracked() {
        let mut gb = vec![E::zero(); d.f];
        for b in 0..d.n {
            for f in 0..d.f {
                let g_f = &g[b * out_stride + f * d.oh * d.ow..b * out_stride + (f + 1) * d.oh * d.ow];
                let s: E = g_f.iter().copied().sum();
                gb[f] = gb[f] + s;
            }
        }
        p_bias.accumulate_grad(&gb);
    }
}
