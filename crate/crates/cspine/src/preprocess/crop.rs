//! Foreground bounding box and margin cropping.

use super::PreprocessError;

/// Inclusive bounding box (r0, r1, c0, c1).
pub type BBox = (usize, usize, usize, usize);

/// Tightest box containing every true pixel.
pub fn foreground_bbox(mask: &[bool], height: usize, width: usize) -> Result<BBox, PreprocessError> {
    assert_eq!(mask.len(), height * width);
    let mut r0 = usize::MAX;
    let mut r1 = 0;
    let mut c0 = usize::MAX;
    let mut c1 = 0;
    let mut any = false;
    for r in 0..height {
        for c in 0..width {
            if mask[r * width + c] {
                any = true;
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if !any {
        return Err(PreprocessError::EmptyForeground);
    }
    Ok((r0, r1, c0, c1))
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Expand a box by round(margin_frac * extent) per side per axis,
/// clamped to the image bounds.
pub fn expand_bbox(
    bbox: BBox,
    height: usize,
    width: usize,
    margin_frac: f64,
) -> Result<BBox, PreprocessError> {
    let (r0, r1, c0, c1) = bbox;
    if r1 >= height || c1 >= width || r0 > r1 || c0 > c1 {
        return Err(PreprocessError::BoxError(format!(
            "bbox {bbox:?} outside {height}x{width} image"
        )));
    }
    if margin_frac < 0.0 {
        return Err(PreprocessError::Param("margin_frac must be >= 0".into()));
    }
    let dr = round_half_up(margin_frac * (r1 - r0 + 1) as f64);
    let dc = round_half_up(margin_frac * (c1 - c0 + 1) as f64);
    Ok((
        r0.saturating_sub(dr),
        (r1 + dr).min(height - 1),
        c0.saturating_sub(dc),
        (c1 + dc).min(width - 1),
    ))
}

/// Extract the boxed region of a row-major channel.
pub fn crop_channel<T: Copy>(data: &[T], width: usize, bbox: BBox) -> Vec<T> {
    let (r0, r1, c0, c1) = bbox;
    let mut out = Vec::with_capacity((r1 - r0 + 1) * (c1 - c0 + 1));
    for r in r0..=r1 {
        out.extend_from_slice(&data[r * width + c0..r * width + c1 + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_true_mask_is_full_frame() {
        let mask = vec![true; 6];
        assert_eq!(foreground_bbox(&mask, 2, 3).unwrap(), (0, 1, 0, 2));
    }

    #[test]
    fn single_pixel_box() {
        let mut mask = vec![false; 10 * 10];
        mask[5 * 10 + 7] = true;
        assert_eq!(foreground_bbox(&mask, 10, 10).unwrap(), (5, 5, 7, 7));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mask = vec![false; 9];
        assert!(matches!(
            foreground_bbox(&mask, 3, 3),
            Err(PreprocessError::EmptyForeground)
        ));
    }

    #[test]
    fn random_masks_match_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (h, w) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let mask: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.2)).collect();
            let trues: Vec<(usize, usize)> = (0..h * w)
                .filter(|&i| mask[i])
                .map(|i| (i / w, i % w))
                .collect();
            match foreground_bbox(&mask, h, w) {
                Ok((r0, r1, c0, c1)) => {
                    assert_eq!(r0, trues.iter().map(|p| p.0).min().unwrap());
                    assert_eq!(r1, trues.iter().map(|p| p.0).max().unwrap());
                    assert_eq!(c0, trues.iter().map(|p| p.1).min().unwrap());
                    assert_eq!(c1, trues.iter().map(|p| p.1).max().unwrap());
                }
                Err(_) => assert!(trues.is_empty()),
            }
        }
    }

    #[test]
    fn zero_margin_is_identity() {
        assert_eq!(expand_bbox((2, 5, 1, 4), 10, 10, 0.0).unwrap(), (2, 5, 1, 4));
    }

    #[test]
    fn five_percent_margin_hand_example() {
        // 20-row, 20-col box in 100x100: round(0.05*20)=1 per side
        assert_eq!(
            expand_bbox((40, 59, 30, 49), 100, 100, 0.05).unwrap(),
            (39, 60, 29, 50)
        );
    }

    #[test]
    fn margin_clamps_at_image_edges() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (h, w) = (rng.gen_range(1..30), rng.gen_range(1..30));
            let r0 = rng.gen_range(0..h);
            let r1 = rng.gen_range(r0..h);
            let c0 = rng.gen_range(0..w);
            let c1 = rng.gen_range(c0..w);
            let margin = rng.gen_range(0.0..0.5);
            let (er0, er1, ec0, ec1) = expand_bbox((r0, r1, c0, c1), h, w, margin).unwrap();
            assert!(er0 <= r0 && er1 >= r1 && ec0 <= c0 && ec1 >= c1);
            assert!(er1 < h && ec1 < w);
        }
    }

    #[test]
    fn out_of_image_box_is_an_error() {
        assert!(matches!(
            expand_bbox((0, 10, 0, 3), 5, 5, 0.05),
            Err(PreprocessError::BoxError(_))
        ));
    }
}
