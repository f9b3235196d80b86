//! Grad-CAM heatmaps from the final-stage activation maps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FractureBox;
use crate::nn::{cnn_forward, CnnParams, ResidualCnnConfig};
use crate::preprocess::{bilinear_resize, write_pgm, PreprocessedSlice, SliceProvenance};
use crate::scalar::Scalar;

use super::infer::slices_to_tensor;
use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCam {
    /// Raw map side (final-stage spatial resolution).
    pub map_side: usize,
    /// Normalized heatmap at map resolution, values in [0,1].
    pub map: Vec<f64>,
    /// Input side S.
    pub side: usize,
    /// Bilinearly upsampled heatmap, S x S.
    pub upsampled: Vec<f64>,
    /// Argmax of the upsampled map as (row, col); ties to lowest index.
    pub argmax: (usize, usize),
}

/// Channel-weighted activation map: alpha_k = spatial mean of the
/// gradient of channel k, L = relu(sum_k alpha_k A_k), min-max
/// normalized (an all-zero L stays zero).
pub fn cam_from_maps(maps: &[f64], grads: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    assert_eq!(maps.len(), channels * h * w);
    assert_eq!(grads.len(), maps.len());
    let hw = h * w;
    let alphas: Vec<f64> = (0..channels)
        .map(|k| grads[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect();
    let mut cam: Vec<f64> = (0..hw)
        .map(|i| {
            let s: f64 = (0..channels).map(|k| alphas[k] * maps[k * hw + i]).sum();
            s.max(0.0)
        })
        .collect();
    let max = cam.iter().cloned().fold(0.0, f64::max);
    let min = cam.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > min {
        for v in &mut cam {
            *v = (*v - min) / (max - min);
        }
    } else {
        cam.fill(0.0);
    }
    cam
}

/// Grad-CAM for one slice: forward to the image logit, backprop to the
/// final-stage maps, weight channels by their mean gradient.
pub fn grad_cam<E: Scalar>(
    config: &ResidualCnnConfig,
    params: &CnnParams<E>,
    slice: &PreprocessedSlice,
) -> Result<GradCam, PipelineError> {
    let x = slices_to_tensor::<E>(&[slice]).detached();
    let out = cnn_forward(&x, config, params)?;
    out.logit.backward()?;
    let shape = out.last_maps.shape().to_vec();
    let (channels, h, w) = (shape[1], shape[2], shape[3]);
    let maps: Vec<f64> = out.last_maps.data().iter().map(|v| v.as_f64()).collect();
    let grads: Vec<f64> = match out.last_maps.grad() {
        Some(g) => g.iter().map(|v| v.as_f64()).collect(),
        // graph untracked (e.g. all-zero parameters yield constant folds)
        None => vec![0.0; maps.len()],
    };
    let map = cam_from_maps(&maps, &grads, channels, h, w);
    debug_assert_eq!(h, w, "square input keeps square maps");
    let side = config.input_side;
    let upsampled = bilinear_resize(&map, h, side);
    let argmax = upsampled
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        })
        .0;
    Ok(GradCam {
        map_side: h,
        map,
        side,
        upsampled,
        argmax: (argmax / side, argmax % side),
    })
}

/// True when the heatmap argmax falls inside a ground-truth box mapped
/// into the model frame and dilated by `dilation` pixels.
pub fn heatmap_hits_box(
    cam: &GradCam,
    boxes: &[FractureBox],
    prov: &SliceProvenance,
    dilation: f64,
) -> bool {
    let (ar, ac) = (cam.argmax.0 as f64, cam.argmax.1 as f64);
    boxes.iter().any(|b| {
        // clamp corners into the crop box before mapping
        let (r0, r1, c0, c1) = prov.crop_box;
        let br0 = (b.r0 as usize).clamp(r0, r1);
        let br1 = (b.r1 as usize).clamp(r0, r1);
        let bc0 = (b.c0 as usize).clamp(c0, c1);
        let bc1 = (b.c1 as usize).clamp(c0, c1);
        let Some((tr0, tc0)) = prov.map_point(br0, bc0, cam.side) else {
            return false;
        };
        let Some((tr1, tc1)) = prov.map_point(br1, bc1, cam.side) else {
            return false;
        };
        ar >= tr0 - dilation && ar <= tr1 + dilation && ac >= tc0 - dilation && ac <= tc1 + dilation
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCamSidecar {
    pub case_id: String,
    pub slice_index: usize,
    pub crop_box: (usize, usize, usize, usize),
    pub argmax: (usize, usize),
    /// Ground-truth boxes in original-slice coordinates, when present.
    pub boxes: Vec<FractureBox>,
}

/// Write `<stem>_heat.pgm`, `<stem>_overlay.pgm` (heatmap blended onto
/// the gross-bone channel), and `<stem>.json`.
pub fn export_gradcam(
    dir: &Path,
    case_id: &str,
    slice_index: usize,
    slice: &PreprocessedSlice,
    boxes: &[FractureBox],
    cam: &GradCam,
) -> Result<(), PipelineError> {
    let stem = format!("{case_id}_s{slice_index:03}");
    let s = cam.side;
    write_pgm(&dir.join(format!("{stem}_heat.pgm")), &cam.upsampled, s, s)?;
    let overlay: Vec<f64> = slice.channels[2]
        .iter()
        .zip(&cam.upsampled)
        .map(|(&g, &h)| (0.5 * g + 0.5 * h).clamp(0.0, 1.0))
        .collect();
    write_pgm(&dir.join(format!("{stem}_overlay.pgm")), &overlay, s, s)?;
    let sidecar = GradCamSidecar {
        case_id: case_id.to_string(),
        slice_index,
        crop_box: slice.provenance.crop_box,
        argmax: cam.argmax,
        boxes: boxes.to_vec(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| PipelineError::Param(e.to_string()))?;
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}
