//! Zero padding to square and bilinear resizing.

/// How a slice was padded before resizing, for coordinate mapping back
/// to the original frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PadInfo {
    pub top: usize,
    pub left: usize,
    /// Side of the square after padding, before resizing.
    pub padded_side: usize,
}

/// Zero-pad the short axis symmetrically (extra pixel to bottom/right)
/// to a square of side max(h, w).
pub fn pad_to_square(data: &[f64], h: usize, w: usize) -> (Vec<f64>, PadInfo) {
    assert_eq!(data.len(), h * w);
    let side = h.max(w);
    let top = (side - h) / 2;
    let left = (side - w) / 2;
    let mut out = vec![0.0; side * side];
    for r in 0..h {
        out[(r + top) * side + left..(r + top) * side + left + w]
            .copy_from_slice(&data[r * w..(r + 1) * w]);
    }
    (
        out,
        PadInfo {
            top,
            left,
            padded_side: side,
        },
    )
}

/// Corner-aligned source coordinate: src = dst * (src_len-1)/(dst_len-1),
/// with a degenerate single-pixel destination mapping to index 0.
#[inline]
pub fn src_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    if dst_len <= 1 {
        0.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

/// Bilinear resize of a square image to target x target.
pub fn bilinear_resize(data: &[f64], side: usize, target: usize) -> Vec<f64> {
    assert_eq!(data.len(), side * side);
    let mut out = vec![0.0; target * target];
    for r in 0..target {
        let sr = src_coord(r, side, target);
        let r0 = sr.floor() as usize;
        let r1 = (r0 + 1).min(side - 1);
        let fr = sr - r0 as f64;
        for c in 0..target {
            let sc = src_coord(c, side, target);
            let c0 = sc.floor() as usize;
            let c1 = (c0 + 1).min(side - 1);
            let fc = sc - c0 as f64;
            let top = data[r0 * side + c0] * (1.0 - fc) + data[r0 * side + c1] * fc;
            let bot = data[r1 * side + c0] * (1.0 - fc) + data[r1 * side + c1] * fc;
            out[r * target + c] = top * (1.0 - fr) + bot * fr;
        }
    }
    out
}

/// Pad to square, then bilinearly resize to target x target.
pub fn pad_and_resize(data: &[f64], h: usize, w: usize, target: usize) -> (Vec<f64>, PadInfo) {
    assert!(h >= 1 && w >= 1);
    let (square, pad) = pad_to_square(data, h, w);
    if pad.padded_side == target {
        return (square, pad);
    }
    (bilinear_resize(&square, pad.padded_side, target), pad)
}
