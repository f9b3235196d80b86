//! Training-time augmentation: random horizontal flip and small rotation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{src_bilinear_sample, PreprocessedSlice};

pub const MAX_ROTATION_DEGREES: f64 = 10.0;

/// With probability 0.5 flip horizontally, then rotate by an angle
/// uniform in [-10, +10] degrees about the image center with bilinear
/// sampling; out-of-frame areas are filled with 0. Labels are untouched.
pub fn augment(slice: &PreprocessedSlice, rng: &mut ChaCha8Rng) -> PreprocessedSlice {
    let flip = rng.gen_bool(0.5);
    let degrees = rng.gen_range(-MAX_ROTATION_DEGREES..=MAX_ROTATION_DEGREES);
    augment_with(slice, flip, degrees)
}

/// Deterministic core of [`augment`].
pub fn augment_with(slice: &PreprocessedSlice, flip: bool, degrees: f64) -> PreprocessedSlice {
    let s = slice.side;
    let mut channels = slice.channels.clone();
    if flip {
        for ch in &mut channels {
            for r in 0..s {
                ch[r * s..(r + 1) * s].reverse();
            }
        }
    }
    if degrees != 0.0 {
        let theta = degrees.to_radians();
        let (sin, cos) = theta.sin_cos();
        let center = (s as f64 - 1.0) / 2.0;
        for ch in &mut channels {
            let src = ch.clone();
            for r in 0..s {
                for c in 0..s {
                    // inverse rotation: sample the source at R(-theta) * (dst - center)
                    let dy = r as f64 - center;
                    let dx = c as f64 - center;
                    let sy = cos * dy - sin * dx + center;
                    let sx = sin * dy + cos * dx + center;
                    ch[r * s + c] = src_bilinear_sample(&src, s, sy, sx);
                }
            }
        }
    }
    PreprocessedSlice {
        channels,
        ..slice.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{PadInfo, SliceProvenance};

    fn ramp_slice(side: usize) -> PreprocessedSlice {
        let ch: Vec<f64> = (0..side * side)
            .map(|i| (i % side) as f64 / (side - 1) as f64)
            .collect();
        PreprocessedSlice {
            side,
            channels: [ch.clone(), ch.clone(), ch],
            provenance: SliceProvenance {
                crop_box: (0, side - 1, 0, side - 1),
                original_dims: (side, side),
                pad: PadInfo { top: 0, left: 0, padded_side: side },
                fallback_full_frame: false,
            },
        }
    }

    #[test]
    fn identity_when_no_flip_and_zero_angle() {
        let s = ramp_slice(8);
        let out = augment_with(&s, false, 0.0);
        assert_eq!(out.channels, s.channels);
    }

    #[test]
    fn double_flip_is_identity() {
        let s = ramp_slice(9);
        let once = augment_with(&s, true, 0.0);
        let twice = augment_with(&once, true, 0.0);
        assert_eq!(twice.channels, s.channels);
    }

    #[test]
    fn rotate_forth_and_back_bounded_interpolation_error() {
        // Smooth horizontal ramp: +10 then -10 degrees must stay within
        // 0.1 per pixel away from the frame border.
        let s = ramp_slice(32);
        let there = augment_with(&s, false, 10.0);
        let back = augment_with(&there, false, -10.0);
        let side = s.side;
        for r in 4..side - 4 {
            for c in 4..side - 4 {
                let diff = (back.channels[0][r * side + c] - s.channels[0][r * side + c]).abs();
                assert!(diff <= 0.1, "pixel ({r},{c}) diff {diff}");
            }
        }
    }

    #[test]
    fn shape_and_provenance_preserved() {
        use rand::SeedableRng;
        let s = ramp_slice(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = augment(&s, &mut rng);
        assert_eq!(out.side, s.side);
        assert_eq!(out.provenance, s.provenance);
        assert!(out
            .channels
            .iter()
            .all(|ch| ch.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
