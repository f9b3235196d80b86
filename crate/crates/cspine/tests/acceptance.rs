//! Acceptance gate: one test per release criterion. Each test prints a
//! single PASS/FAIL verdict line (visible with `-- --nocapture`) and
//! fails with details when its criterion is not met.
//!
//! The cross-validation benchmark is shared between the accuracy and
//! Grad-CAM criteria; it runs once and caches only plain data.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cspine::data::{generate_case, HUVolume};
use cspine::metrics::{aggregate_folds, binary_metrics, confusion, roc_auc, FoldMetrics};
use cspine::nn::{
    bce_loss, blstm_forward, cnn_forward, lstm_step, CaseClassifierParams, CnnParams, LstmParams,
    ResidualCnnConfig,
};
use cspine::pipeline::{grad_cam, heatmap_hits_box, run_cv, PhaseConfig, TrainConfig};
use cspine::preprocess::{
    expand_bbox, foreground_bbox, hu_window, otsu_threshold, pad_and_resize, preprocess_case,
    preprocess_slice, quantize_256, WindowSpec, CROP_MARGIN, HU_MAX, HU_MIN,
};
use cspine::tensor::{grad_check, GradReport, TensorError};
use cspine::Tensor64;

fn verdict(number: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {number} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} ({name}): {detail}");
}

// ---------------------------------------------------------------- helpers

fn rand_param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor64 {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor64::param(shape, data).unwrap()
}

/// Random values bounded away from zero, for kinked activations.
fn rand_param_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor64 {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.2..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor64::param(shape, data).unwrap()
}

/// Pairwise-distinct values with gaps far larger than the probe step,
/// so max-pool argmaxes cannot flip under perturbation.
fn rand_param_distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor64 {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut data = vec![0.0f64; n];
    for (rank, &i) in order.iter().enumerate() {
        data[i] = rank as f64 * 0.01 + rng.gen_range(-0.004..0.004);
    }
    Tensor64::param(shape, data).unwrap()
}

fn record(
    fails: &mut Vec<String>,
    name: &str,
    seed: u64,
    report: Result<GradReport, TensorError>,
) {
    match report {
        Ok(r) if r.pass => {}
        Ok(r) => {
            let worst = r
                .params
                .iter()
                .map(|p| p.max_rel_diff)
                .fold(0.0f64, f64::max);
            fails.push(format!("{name} seed {seed}: max rel diff {worst:.3e}"));
        }
        Err(e) => fails.push(format!("{name} seed {seed}: {e}")),
    }
}

// -------------------------------------------------- criterion 1: gradients

const GC_EPS: f64 = 1e-6;
const GC_RTOL: f64 = 1e-5;
const GC_SEEDS: u64 = 50;

#[test]
fn criterion_1_gradient_checks() {
    let t0 = Instant::now();
    let mut fails = Vec::new();

    for seed in 0..GC_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // add, sub, mul, scale, sum, mean
        let a = rand_param(&mut rng, &[2, 3]);
        let b = rand_param(&mut rng, &[2, 3]);
        record(
            &mut fails,
            "arithmetic",
            seed,
            grad_check(
                |ps| {
                    let prod = ps[0].add(&ps[1]).unwrap().mul(&ps[0].sub(&ps[1]).unwrap()).unwrap();
                    prod.mean()
                        .add(&ps[0].mul(&ps[0]).unwrap().scale(0.5).sum())
                        .unwrap()
                },
                &[a, b],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // relu, sigmoid, tanh
        let x = rand_param_off_zero(&mut rng, &[2, 4]);
        record(
            &mut fails,
            "activations",
            seed,
            grad_check(
                |ps| {
                    ps[0]
                        .relu()
                        .sum()
                        .add(&ps[0].sigmoid().mul(&ps[0].tanh_act()).unwrap().sum())
                        .unwrap()
                },
                &[x],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // affine, matmul, concat_cols
        let x = rand_param(&mut rng, &[2, 3]);
        let w = rand_param(&mut rng, &[3, 2]);
        let b = rand_param(&mut rng, &[2]);
        let w2 = rand_param(&mut rng, &[3, 1]);
        record(
            &mut fails,
            "linear",
            seed,
            grad_check(
                |ps| {
                    let y = ps[0]
                        .affine(&ps[1], &ps[2])
                        .unwrap()
                        .concat_cols(&ps[0].matmul(&ps[3]).unwrap())
                        .unwrap();
                    y.mul(&y).unwrap().sum()
                },
                &[x, w, b, w2],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // conv2d, stride 1 pad 1 and stride 2 pad 0
        let x = rand_param(&mut rng, &[1, 2, 5, 5]);
        let k = rand_param(&mut rng, &[2, 2, 3, 3]);
        let kb = rand_param(&mut rng, &[2]);
        record(
            &mut fails,
            "conv2d s1p1",
            seed,
            grad_check(
                |ps| {
                    let c = ps[0].conv2d(&ps[1], &ps[2], 1, 1).unwrap();
                    c.mul(&c).unwrap().mean()
                },
                &[x, k, kb],
                GC_EPS,
                GC_RTOL,
            ),
        );
        let x = rand_param(&mut rng, &[1, 2, 5, 5]);
        let k = rand_param(&mut rng, &[3, 2, 2, 2]);
        let kb = rand_param(&mut rng, &[3]);
        record(
            &mut fails,
            "conv2d s2p0",
            seed,
            grad_check(
                |ps| {
                    let c = ps[0].conv2d(&ps[1], &ps[2], 2, 0).unwrap();
                    c.mul(&c).unwrap().mean()
                },
                &[x, k, kb],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // max_pool2d
        let x = rand_param_distinct(&mut rng, &[1, 2, 6, 6]);
        record(
            &mut fails,
            "max_pool2d",
            seed,
            grad_check(
                |ps| {
                    let p = ps[0].max_pool2d(2, 2).unwrap();
                    p.mul(&p).unwrap().sum()
                },
                &[x],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // global_avg_pool
        let x = rand_param(&mut rng, &[2, 3, 4, 4]);
        record(
            &mut fails,
            "global_avg_pool",
            seed,
            grad_check(
                |ps| {
                    let g = ps[0].global_avg_pool().unwrap();
                    g.mul(&g).unwrap().sum()
                },
                &[x],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // bce_loss, probabilities inside the clamp interval
        let n = 4;
        let pdata: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
        let p = Tensor64::param(&[n], pdata).unwrap();
        let ydata: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let y = Tensor64::new(&[n], ydata).unwrap();
        record(
            &mut fails,
            "bce_loss",
            seed,
            grad_check(
                |ps| bce_loss(&ps[0], &y).unwrap(),
                &[p],
                GC_EPS,
                GC_RTOL,
            ),
        );

        // full residual CNN, image head through BCE
        let config = ResidualCnnConfig {
            in_channels: 3,
            stage_widths: vec![4],
            blocks_per_stage: vec![1],
            input_side: 8,
            feature_dim: 4,
        };
        let mut init = CnnParams::<f64>::init(&config, seed).unwrap();
        let cnn_params: Vec<Tensor64> =
            init.params_mut().into_iter().map(|t| t.clone()).collect();
        let xdata: Vec<f64> = (0..2 * 3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = Tensor64::new(&[2, 3, 8, 8], xdata).unwrap();
        let y = Tensor64::new(&[2, 1], vec![1.0, 0.0]).unwrap();
        record(
            &mut fails,
            "residual cnn",
            seed,
            grad_check(
                |ps| {
                    let mut params = CnnParams::<f64>::zeros(&config).unwrap();
                    for (slot, t) in params.params_mut().into_iter().zip(ps) {
                        *slot = t.clone();
                    }
                    let out = cnn_forward(&x, &config, &params).unwrap();
                    bce_loss(&out.logit.sigmoid(), &y).unwrap()
                },
                &cnn_params,
                GC_EPS,
                GC_RTOL,
            ),
        );

        // three chained LSTM steps, inputs included as parameters
        let mut cell = LstmParams::<f64>::init(3, 4, &mut rng);
        let mut lstm_params: Vec<Tensor64> =
            cell.params_mut().into_iter().map(|t| t.clone()).collect();
        for _ in 0..3 {
            lstm_params.push(rand_param(&mut rng, &[2, 3]));
        }
        record(
            &mut fails,
            "lstm chain",
            seed,
            grad_check(
                |ps| {
                    let mut cell = LstmParams::<f64>::zeros(3, 4);
                    for (slot, t) in cell.params_mut().into_iter().zip(ps) {
                        *slot = t.clone();
                    }
                    let mut h = Tensor64::zeros(&[2, 4]);
                    let mut c = Tensor64::zeros(&[2, 4]);
                    for x in &ps[12..15] {
                        let (hn, cn) = lstm_step(x, &h, &c, &cell).unwrap();
                        h = hn;
                        c = cn;
                    }
                    h.mul(&h).unwrap().sum().add(&c.mul(&c).unwrap().sum()).unwrap()
                },
                &lstm_params,
                GC_EPS,
                GC_RTOL,
            ),
        );

        // BLSTM with ragged valid lengths, affine head, sigmoid, BCE
        let mut clf = CaseClassifierParams::<f64>::init(3, 4, seed);
        let clf_params: Vec<Tensor64> =
            clf.params_mut().into_iter().map(|t| t.clone()).collect();
        let seq: Vec<Tensor64> = (0..3)
            .map(|_| {
                let data: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Tensor64::new(&[2, 3], data).unwrap()
            })
            .collect();
        let y = Tensor64::new(&[2, 1], vec![0.0, 1.0]).unwrap();
        record(
            &mut fails,
            "blstm classifier",
            seed,
            grad_check(
                |ps| {
                    let mut clf = CaseClassifierParams::<f64>::zeros(3, 4);
                    for (slot, t) in clf.params_mut().into_iter().zip(ps) {
                        *slot = t.clone();
                    }
                    let readout =
                        blstm_forward(&seq, &clf.blstm.fwd, &clf.blstm.bwd, &[3, 2]).unwrap();
                    let p = readout
                        .affine(&clf.head_weight, &clf.head_bias)
                        .unwrap()
                        .sigmoid();
                    bce_loss(&p, &y).unwrap()
                },
                &clf_params,
                GC_EPS,
                GC_RTOL,
            ),
        );
    }

    let elapsed = t0.elapsed().as_secs_f64();
    if elapsed > 120.0 {
        fails.push(format!("runtime {elapsed:.1}s exceeds 120s"));
    }
    verdict(
        1,
        "gradient checks",
        fails.is_empty(),
        &format!("{} failures: {:?}", fails.len(), fails),
    );
}

// ------------------------------------------------- criterion 2: oracles

/// Definition-level Otsu: evaluate the between-class variance for every
/// candidate threshold directly from the two classes.
fn otsu_exhaustive(bins: &[u8]) -> Option<u8> {
    let n = bins.len() as f64;
    let mut best: Option<(u8, f64)> = None;
    for t in 0..=254u8 {
        let class0: Vec<f64> = bins.iter().filter(|&&b| b <= t).map(|&b| b as f64).collect();
        let class1: Vec<f64> = bins.iter().filter(|&&b| b > t).map(|&b| b as f64).collect();
        if class0.is_empty() || class1.is_empty() {
            continue;
        }
        let w0 = class0.len() as f64 / n;
        let w1 = class1.len() as f64 / n;
        let mu0 = class0.iter().sum::<f64>() / class0.len() as f64;
        let mu1 = class1.iter().sum::<f64>() / class1.len() as f64;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        match best {
            Some((_, bv)) if var <= bv => {}
            _ => best = Some((t, var)),
        }
    }
    best.map(|(t, _)| t)
}

/// AUC as the pairwise ranking statistic P(s+ > s-) + 0.5 P(s+ = s-).
fn auc_pairwise(scores: &[f64], truths: &[u8]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .zip(truths)
        .filter(|(_, &t)| t == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(truths)
        .filter(|(_, &t)| t == 0)
        .map(|(&s, _)| s)
        .collect();
    let mut total = 0.0;
    for &p in &pos {
        for &n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (pos.len() as f64 * neg.len() as f64)
}

/// Direct seven-loop convolution with zero padding, accumulating in the
/// same (channel, kernel-row, kernel-col) order as the implementation.
#[allow(clippy::too_many_arguments)]
fn conv2d_naive(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (f, kh, kw): (usize, usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * f * oh * ow];
    for ni in 0..n {
        for fi in 0..f {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = bias[fi];
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let ii = (oi * stride + ki) as isize - pad as isize;
                                let jj = (oj * stride + kj) as isize - pad as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                let xv = x[((ni * c + ci) * h + ii as usize) * w + jj as usize];
                                acc += k[((fi * c + ci) * kh + ki) * kw + kj] * xv;
                            }
                        }
                    }
                    out[((ni * f + fi) * oh + oi) * ow + oj] = acc;
                }
            }
        }
    }
    out
}

fn max_pool2d_naive(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    k: usize,
    stride: usize,
) -> Vec<f64> {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for nc in 0..n * c {
        let plane = &x[nc * h * w..(nc + 1) * h * w];
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = f64::NEG_INFINITY;
                for ki in 0..k {
                    for kj in 0..k {
                        best = best.max(plane[(oi * stride + ki) * w + oj * stride + kj]);
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

#[test]
fn criterion_2_oracle_equivalence() {
    let mut fails = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);

    // Otsu vs. exhaustive search, 1000 random histograms, exact
    for i in 0..1000 {
        let n = rng.gen_range(2..300);
        let hi = rng.gen_range(2u16..=256);
        let bins: Vec<u8> = (0..n).map(|_| rng.gen_range(0..hi) as u8).collect();
        match (otsu_threshold(&bins), otsu_exhaustive(&bins)) {
            (Ok(t), Some(e)) if t == e => {}
            (Err(_), None) => {}
            (got, oracle) => {
                fails.push(format!("otsu set {i}: {got:?} vs oracle {oracle:?}"));
            }
        }
    }

    // trapezoid AUC vs. pairwise statistic, 1000 random score sets
    for i in 0..1000 {
        let n = rng.gen_range(4..60);
        let quantize = rng.gen_bool(0.5);
        let levels: u32 = rng.gen_range(2..10);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.gen_range(0.0..1.0);
                if quantize {
                    (s * levels as f64).floor() / levels as f64
                } else {
                    s
                }
            })
            .collect();
        let mut truths: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
        truths[0] = 1;
        truths[1] = 0;
        let (auc, _) = roc_auc(&scores, &truths).unwrap();
        let oracle = auc_pairwise(&scores, &truths);
        if (auc - oracle).abs() >= 1e-12 {
            fails.push(format!("auc set {i}: {auc} vs pairwise {oracle}"));
        }
    }

    // conv2d and pooling vs. naive loops, exact f64
    for i in 0..200 {
        let (n, c, h, w) = (
            rng.gen_range(1..=2),
            rng.gen_range(1..=3),
            rng.gen_range(3..=7),
            rng.gen_range(3..=7),
        );
        let f = rng.gen_range(1..=3);
        let kh = rng.gen_range(1..=3.min(h));
        let kw = rng.gen_range(1..=3.min(w));
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=1);
        let xd: Vec<f64> = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kd: Vec<f64> = (0..f * c * kh * kw).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bd: Vec<f64> = (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor64::new(&[n, c, h, w], xd.clone()).unwrap();
        let k = Tensor64::new(&[f, c, kh, kw], kd.clone()).unwrap();
        let b = Tensor64::new(&[f], bd.clone()).unwrap();
        let got = x.conv2d(&k, &b, stride, pad).unwrap();
        let want = conv2d_naive(&xd, (n, c, h, w), &kd, (f, kh, kw), &bd, stride, pad);
        if got.data() != want.as_slice() {
            fails.push(format!("conv set {i} ({n},{c},{h},{w})x({f},{kh},{kw}) s{stride}p{pad}"));
        }

        let (ph, pw) = (rng.gen_range(4..=8), rng.gen_range(4..=8));
        let pk = rng.gen_range(2..=3);
        let ps = rng.gen_range(1..=2);
        let pxd: Vec<f64> = (0..n * c * ph * pw).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let px = Tensor64::new(&[n, c, ph, pw], pxd.clone()).unwrap();
        let got = px.max_pool2d(pk, ps).unwrap();
        let want = max_pool2d_naive(&pxd, (n, c, ph, pw), pk, ps);
        if got.data() != want.as_slice() {
            fails.push(format!("max_pool set {i} ({n},{c},{ph},{pw}) k{pk}s{ps}"));
        }

        let got = px.global_avg_pool().unwrap();
        let inv = 1.0 / (ph * pw) as f64;
        let want: Vec<f64> = (0..n * c)
            .map(|nc| pxd[nc * ph * pw..(nc + 1) * ph * pw].iter().sum::<f64>() * inv)
            .collect();
        if got.data() != want.as_slice() {
            fails.push(format!("global_avg_pool set {i}"));
        }
    }

    // confusion-metric spot values: TP=6 TN=3 FP=1 FN=2
    let preds = [vec![1u8; 6], vec![0; 3], vec![1; 1], vec![0; 2]].concat();
    let truths = [vec![1u8; 6], vec![0; 3], vec![0; 1], vec![1; 2]].concat();
    let bm = binary_metrics(&confusion(&preds, &truths).unwrap()).unwrap();
    let spots = [
        ("TPR", bm.tpr, 0.75),
        ("PPV", bm.ppv, 6.0 / 7.0),
        ("F1", bm.f1, 0.8),
        ("MCC", bm.mcc, 16.0 / 1120f64.sqrt()),
    ];
    for (name, got, want) in spots {
        match got {
            Some(v) if (v - want).abs() < 1e-6 => {}
            other => fails.push(format!("{name}: {other:?}, want {want}")),
        }
    }

    verdict(
        2,
        "oracle equivalence",
        fails.is_empty(),
        &format!("{} failures: {:?}", fails.len(), fails),
    );
}

// --------------------------------------------- criterion 3: preprocessing

#[test]
fn criterion_3_preprocessing_properties() {
    let mut fails = Vec::new();

    // windowing is monotone nondecreasing over the whole HU range, with
    // saturated endpoints, for all three schemes
    for spec in WindowSpec::all_three() {
        let mut prev = f64::NEG_INFINITY;
        for hu in HU_MIN..=HU_MAX {
            let v = hu_window(hu as f64, &spec);
            if !(0.0..=1.0).contains(&v) || v < prev {
                fails.push(format!("{} not monotone in [0,1] at HU {hu}", spec.name));
                break;
            }
            prev = v;
        }
        if hu_window(HU_MIN as f64, &spec) != 0.0 || hu_window(HU_MAX as f64, &spec) != 1.0 {
            fails.push(format!("{} endpoints not saturated", spec.name));
        }
    }

    // the crop box contains an independently re-derived foreground box
    for seed in 0..10u64 {
        let volume = generate_case(seed, seed % 2 == 0, 6, 48).unwrap();
        for (s, slice) in volume.slices.iter().enumerate() {
            let spec = WindowSpec::gross_bone();
            let gross: Vec<f64> = slice.pixels.iter().map(|&v| hu_window(v as f64, &spec)).collect();
            let bins = quantize_256(&gross);
            let Ok(t) = otsu_threshold(&bins) else { continue };
            let mask: Vec<bool> = bins.iter().map(|&b| b > t).collect();
            let Ok(fg) = foreground_bbox(&mask, slice.height, slice.width) else { continue };
            let pre = preprocess_slice(slice, 32);
            let (r0, r1, c0, c1) = pre.provenance.crop_box;
            if r0 > fg.0 || r1 < fg.1 || c0 > fg.2 || c1 < fg.3 {
                fails.push(format!(
                    "case {seed} slice {s}: crop {:?} misses foreground {fg:?}",
                    pre.provenance.crop_box
                ));
            }
        }
    }

    // margin expansion always contains the original box
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let h = rng.gen_range(4..64);
        let w = rng.gen_range(4..64);
        let r0 = rng.gen_range(0..h);
        let r1 = rng.gen_range(r0..h);
        let c0 = rng.gen_range(0..w);
        let c1 = rng.gen_range(c0..w);
        let grown = expand_bbox((r0, r1, c0, c1), h, w, CROP_MARGIN).unwrap();
        if grown.0 > r0 || grown.1 < r1 || grown.2 > c0 || grown.3 < c1 || grown.1 >= h || grown.3 >= w {
            fails.push(format!("expand {:?} -> {grown:?} in {h}x{w}", (r0, r1, c0, c1)));
        }
    }

    // pad-and-resize is the identity on already-square inputs
    for _ in 0..50 {
        let s = rng.gen_range(2..40);
        let data: Vec<f64> = (0..s * s).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (out, pad) = pad_and_resize(&data, s, s, s);
        if out != data || pad.top != 0 || pad.left != 0 || pad.padded_side != s {
            fails.push(format!("square identity failed at side {s}"));
        }
    }

    verdict(
        3,
        "preprocessing properties",
        fails.is_empty(),
        &format!("{} failures: {:?}", fails.len(), fails),
    );
}

// ------------------------------------- criteria 4 and 5: shared benchmark

struct BenchOutcome {
    fold_balanced_case_acc: Vec<f64>,
    tpr_bitwise_identical: bool,
    gradcam_hits: usize,
    gradcam_total: usize,
    elapsed_secs: f64,
}

static BENCH: OnceLock<BenchOutcome> = OnceLock::new();

fn benchmark() -> &'static BenchOutcome {
    BENCH.get_or_init(|| {
        let t0 = Instant::now();
        let config = TrainConfig::desk_scale();
        let volumes: Vec<HUVolume> = (0..140u64)
            .map(|i| generate_case(1000 + i, i < 40, 12, 64).unwrap())
            .collect();
        let run = run_cv::<f32>(&volumes, 7, &config).unwrap();
        let elapsed_secs = t0.elapsed().as_secs_f64();

        let fold_balanced_case_acc: Vec<f64> = run
            .folds
            .iter()
            .map(|f| f.case_balanced.values[5].expect("accuracy defined"))
            .collect();

        let bits = |v: Option<f64>| v.map(f64::to_bits);
        let mut tpr_bitwise_identical = run
            .folds
            .iter()
            .all(|f| bits(f.case_imbalanced.values[0]) == bits(f.case_balanced.values[0]));
        tpr_bitwise_identical &=
            run.reports.case_imbalanced.cells[0] == run.reports.case_balanced.cells[0];

        // Grad-CAM localization on correctly classified positive slices
        let by_id: HashMap<&str, &HUVolume> =
            volumes.iter().map(|v| (v.case_id.as_str(), v)).collect();
        let mut gradcam_hits = 0;
        let mut gradcam_total = 0;
        for fold in &run.folds {
            let (cnn_config, cnn_params) = fold.cnn_ckpt.restore_cnn::<f32>().unwrap();
            for pred in &fold.predictions {
                let volume = by_id[pred.case_id.as_str()];
                if volume.case_label != 1 {
                    continue;
                }
                let case = preprocess_case(volume, cnn_config.input_side).unwrap();
                for (s, slice) in case.slices.iter().enumerate() {
                    if case.image_labels[s] != 1 || pred.image_scores[s] <= config.threshold {
                        continue;
                    }
                    gradcam_total += 1;
                    let cam = grad_cam(&cnn_config, &cnn_params, slice).unwrap();
                    if heatmap_hits_box(&cam, &volume.fracture_boxes[s], &slice.provenance, 2.0) {
                        gradcam_hits += 1;
                    }
                }
            }
        }

        BenchOutcome {
            fold_balanced_case_acc,
            tpr_bitwise_identical,
            gradcam_hits,
            gradcam_total,
            elapsed_secs,
        }
    })
}

#[test]
fn criterion_4_cv_benchmark() {
    let bench = benchmark();
    let accs = &bench.fold_balanced_case_acc;
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let pass = accs.len() == 7
        && mean >= 0.90
        && bench.tpr_bitwise_identical
        && bench.elapsed_secs <= 1800.0;
    verdict(
        4,
        "cross-validation benchmark",
        pass,
        &format!(
            "balanced case acc per fold {accs:?} (mean {mean:.3}), \
             TPR balanced==imbalanced: {}, runtime {:.0}s (budget 1800s)",
            bench.tpr_bitwise_identical, bench.elapsed_secs
        ),
    );
}

#[test]
fn criterion_5_gradcam_localization() {
    let bench = benchmark();
    let rate = bench.gradcam_hits as f64 / bench.gradcam_total as f64;
    let pass = bench.gradcam_total > 0 && rate >= 0.80;
    verdict(
        5,
        "Grad-CAM localization",
        pass,
        &format!(
            "argmax inside dilated box for {}/{} correctly classified \
             positive slices ({:.1}%)",
            bench.gradcam_hits,
            bench.gradcam_total,
            rate * 100.0
        ),
    );
}

// ----------------------------------------------- criterion 6: determinism

#[test]
fn criterion_6_determinism() {
    let config = TrainConfig {
        cnn: ResidualCnnConfig {
            in_channels: 3,
            stage_widths: vec![4],
            blocks_per_stage: vec![1],
            input_side: 16,
            feature_dim: 4,
        },
        hidden_units: 4,
        phase1: PhaseConfig { lr: 1e-2, batch: 8, epochs: 2, patience: 5 },
        phase2: PhaseConfig { lr: 1e-2, batch: 4, epochs: 2, patience: 5 },
        decay_period: 5,
        decay_gamma: 0.2,
        dropout: 0.1,
        oversample_positive: true,
        batches_per_epoch: Some(4),
        seed: 11,
        threshold: 0.5,
        fold: 0,
    };
    let volumes: Vec<HUVolume> = (0..12u64)
        .map(|i| generate_case(500 + i, i % 3 == 0, 4, 32).unwrap())
        .collect();

    let a = run_cv::<f32>(&volumes, 2, &config).unwrap();
    let b = run_cv::<f32>(&volumes, 2, &config).unwrap();

    let mut fails = Vec::new();
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        if fa.cnn_ckpt.to_bytes() != fb.cnn_ckpt.to_bytes()
            || fa.blstm_ckpt.to_bytes() != fb.blstm_ckpt.to_bytes()
        {
            fails.push(format!("fold {} checkpoints differ", fa.fold));
        }
        if fa.predictions != fb.predictions {
            fails.push(format!("fold {} predictions differ", fa.fold));
        }
    }
    let ra = serde_json::to_vec(&a.reports).unwrap();
    let rb = serde_json::to_vec(&b.reports).unwrap();
    if ra != rb {
        fails.push("serialized reports differ".into());
    }
    if a.reports.to_text() != b.reports.to_text() {
        fails.push("rendered reports differ".into());
    }

    verdict(
        6,
        "determinism",
        fails.is_empty(),
        &format!("{fails:?}"),
    );
}

// ------------------------------------------ criterion 7: report formatting

#[test]
fn criterion_7_report_formatting() {
    // Two folds with a distinct value for every metric, so any column
    // reordering or formatting drift breaks the comparison; the AUC
    // column is undefined in both folds.
    let a = FoldMetrics {
        values: [
            Some(0.7),
            Some(0.8),
            Some(0.9),
            Some(0.6),
            Some(0.5),
            Some(0.4),
            Some(0.3),
            None,
        ],
    };
    let b = FoldMetrics {
        values: [
            Some(0.8),
            Some(0.9),
            Some(1.0),
            Some(0.7),
            Some(0.6),
            Some(0.5),
            Some(0.4),
            None,
        ],
    };
    let report = aggregate_folds(&[a, b]).unwrap();
    let got = report.to_text("case-level");
    let want = include_str!("golden/aggregate_report.txt");
    verdict(
        7,
        "report formatting",
        got == want,
        &format!("rendered:\n{got}\ngolden:\n{want}"),
    );
}
