//! CT preprocessing: three-scheme HU windowing, Otsu-based foreground
//! cropping with a 5% margin, zero-pad to square, bilinear resize, and
//! training-time augmentation.

mod augment;
mod crop;
mod otsu;
mod pgm;
mod resize;
mod window;

pub use augment::{augment, augment_with, MAX_ROTATION_DEGREES};
pub use crop::{crop_channel, expand_bbox, foreground_bbox, BBox};
pub use otsu::{otsu_threshold, quantize_256};
pub use pgm::write_pgm;
pub use resize::{bilinear_resize, pad_and_resize, pad_to_square, src_coord, PadInfo};
pub use window::{hu_window, WindowSpec};

use serde::{Deserialize, Serialize};

use crate::data::HUVolume;

pub const HU_MIN: i16 = -1024;
pub const HU_MAX: i16 = 3071;
pub const CROP_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("image has fewer than two distinct intensity bins")]
    DegenerateImage,
    #[error("foreground mask has no true pixel")]
    EmptyForeground,
    #[error("bad crop box: {0}")]
    BoxError(String),
    #[error("case has no slices")]
    EmptyCase,
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// One axial slice of signed-integer Hounsfield values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuSlice {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<i16>,
}

impl HuSlice {
    /// Clamps values into the valid HU range at ingestion.
    pub fn new(height: usize, width: usize, pixels: Vec<i16>) -> Self {
        assert_eq!(pixels.len(), height * width);
        let pixels = pixels
            .into_iter()
            .map(|v| v.clamp(HU_MIN, HU_MAX))
            .collect();
        HuSlice {
            height,
            width,
            pixels,
        }
    }
}

/// Where a preprocessed slice came from in the original frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceProvenance {
    /// Inclusive crop box applied in the original frame.
    pub crop_box: BBox,
    pub original_dims: (usize, usize),
    pub pad: PadInfo,
    /// True when foreground detection failed and the full frame was used.
    pub fallback_full_frame: bool,
}

impl SliceProvenance {
    /// Map a point in original-slice coordinates into the resized
    /// target frame. Returns None for points outside the crop box.
    pub fn map_point(&self, r: usize, c: usize, target: usize) -> Option<(f64, f64)> {
        let (r0, r1, c0, c1) = self.crop_box;
        if r < r0 || r > r1 || c < c0 || c > c1 {
            return None;
        }
        let pr = (r - r0 + self.pad.top) as f64;
        let pc = (c - c0 + self.pad.left) as f64;
        let scale = if self.pad.padded_side <= 1 {
            0.0
        } else {
            (target - 1) as f64 / (self.pad.padded_side - 1) as f64
        };
        Some((pr * scale, pc * scale))
    }
}

/// A slice after windowing, cropping, and resizing: three channels
/// (soft tissue, standard bone, gross bone), each target x target in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSlice {
    pub side: usize,
    pub channels: [Vec<f64>; 3],
    pub provenance: SliceProvenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedCase {
    pub case_id: String,
    pub case_label: u8,
    pub image_labels: Vec<u8>,
    pub slices: Vec<PreprocessedSlice>,
}

/// Bilinear sample at fractional coordinates; zero outside the frame.
pub fn src_bilinear_sample(src: &[f64], side: usize, y: f64, x: f64) -> f64 {
    if y < 0.0 || x < 0.0 || y > (side - 1) as f64 || x > (side - 1) as f64 {
        return 0.0;
    }
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(side - 1);
    let x1 = (x0 + 1).min(side - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = src[y0 * side + x0] * (1.0 - fx) + src[y0 * side + x1] * fx;
    let bot = src[y1 * side + x0] * (1.0 - fx) + src[y1 * side + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Preprocess one slice: window into three channels, detect the
/// foreground on the gross-bone channel, crop all channels with the
/// 5% margin box, pad to square, and resize to `target`.
pub fn preprocess_slice(slice: &HuSlice, target: usize) -> PreprocessedSlice {
    let (h, w) = (slice.height, slice.width);
    let specs = WindowSpec::all_three();
    let channels: Vec<Vec<f64>> = specs
        .iter()
        .map(|spec| {
            slice
                .pixels
                .iter()
                .map(|&v| hu_window(v as f64, spec))
                .collect()
        })
        .collect();

    // Foreground detection on the gross-bone channel.
    let gross = &channels[2];
    let crop = otsu_threshold(&quantize_256(gross))
        .ok()
        .and_then(|t| {
            let mask: Vec<bool> = quantize_256(gross).iter().map(|&b| b > t).collect();
            foreground_bbox(&mask, h, w).ok()
        })
        .and_then(|bbox| expand_bbox(bbox, h, w, CROP_MARGIN).ok());
    let fallback = crop.is_none();
    let crop_box = crop.unwrap_or((0, h - 1, 0, w - 1));

    let mut out_channels: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut pad = PadInfo {
        top: 0,
        left: 0,
        padded_side: 0,
    };
    for ch in &channels {
        let cropped = crop_channel(ch, w, crop_box);
        let (r0, r1, c0, c1) = crop_box;
        let (resized, p) = pad_and_resize(&cropped, r1 - r0 + 1, c1 - c0 + 1, target);
        pad = p;
        out_channels.push(resized);
    }
    let mut it = out_channels.into_iter();
    PreprocessedSlice {
        side: target,
        channels: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        provenance: SliceProvenance {
            crop_box,
            original_dims: (h, w),
            pad,
            fallback_full_frame: fallback,
        },
    }
}

/// Preprocess every slice of a case. Deterministic: identical volumes
/// give bit-identical output.
pub fn preprocess_case(volume: &HUVolume, target: usize) -> Result<PreprocessedCase, PreprocessError> {
    if volume.slices.is_empty() {
        return Err(PreprocessError::EmptyCase);
    }
    let slices = volume
        .slices
        .iter()
        .map(|s| preprocess_slice(s, target))
        .collect();
    Ok(PreprocessedCase {
        case_id: volume.case_id.clone(),
        case_label: volume.case_label,
        image_labels: volume.image_labels.clone(),
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_air_slice_falls_back_to_full_frame() {
        let slice = HuSlice::new(8, 8, vec![-1000; 64]);
        let out = preprocess_slice(&slice, 8);
        assert!(out.provenance.fallback_full_frame);
        assert_eq!(out.provenance.crop_box, (0, 7, 0, 7));
        for ch in &out.channels {
            assert!(ch.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn output_shape_contract() {
        let pixels: Vec<i16> = (0..12 * 10).map(|i| ((i * 37) % 2000) as i16).collect();
        let slice = HuSlice::new(12, 10, pixels);
        let out = preprocess_slice(&slice, 16);
        assert_eq!(out.side, 16);
        for ch in &out.channels {
            assert_eq!(ch.len(), 256);
            assert!(ch.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn hu_values_clamped_at_ingestion() {
        let slice = HuSlice::new(1, 2, vec![-30000, 30000]);
        assert_eq!(slice.pixels, vec![HU_MIN, HU_MAX]);
    }

    #[test]
    fn deterministic_per_slice() {
        let pixels: Vec<i16> = (0..64).map(|i| ((i * 91) % 1500 - 200) as i16).collect();
        let slice = HuSlice::new(8, 8, pixels);
        let a = preprocess_slice(&slice, 8);
        let b = preprocess_slice(&slice, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn crop_box_contains_phantom_ring_every_slice() {
        // negative cases: the full ring is bright, so its extremes are
        // foreground (a fracture gap may remove an extreme from positives)
        for seed in 0..10u64 {
            let (volume, geo) = crate::data::generate_case_geo(seed, false, 6, 48).unwrap();
            let case = preprocess_case(&volume, 32).unwrap();
            for (t, slice) in case.slices.iter().enumerate() {
                assert!(!slice.provenance.fallback_full_frame, "seed {seed} slice {t}");
                let (r0, r1, c0, c1) = slice.provenance.crop_box;
                // extreme pixel centers of the bone annulus
                let (cr, cc) = geo.centers[t];
                let r = geo.ring_outer;
                assert!(r0 as f64 <= (cr - r).ceil() && (cr + r).floor() <= r1 as f64,
                    "seed {seed} slice {t}");
                assert!(c0 as f64 <= (cc - r).ceil() && (cc + r).floor() <= c1 as f64,
                    "seed {seed} slice {t}");
            }
        }
    }

    #[test]
    fn map_point_tracks_crop_and_scale() {
        let prov = SliceProvenance {
            crop_box: (2, 5, 2, 5), // 4x4 region
            original_dims: (8, 8),
            pad: PadInfo { top: 0, left: 0, padded_side: 4 },
            fallback_full_frame: false,
        };
        // corner of the box maps to corner of the target
        assert_eq!(prov.map_point(2, 2, 7), Some((0.0, 0.0)));
        assert_eq!(prov.map_point(5, 5, 7), Some((6.0, 6.0)));
        assert_eq!(prov.map_point(0, 0, 7), None);
    }
}
