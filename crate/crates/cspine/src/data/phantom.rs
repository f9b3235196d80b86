//! Synthetic axial CT phantom: an air background, a soft-tissue disk,
//! and a drifting "vertebral" bone annulus; positive cases carry a dark
//! fracture line cut through the ring on 1-3 contiguous slices, flanked
//! by bright sclerotic margins.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::preprocess::HuSlice;

use super::{DataError, FractureBox, HUVolume, Sex};

/// Ground-truth geometry of a generated case, for invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGeometry {
    /// Per-slice ring center as (row, col).
    pub centers: Vec<(f64, f64)>,
    pub ring_inner: f64,
    pub ring_outer: f64,
    pub soft_radius: f64,
    /// Inclusive slice range carrying the fracture, when positive.
    pub fracture_run: Option<(usize, usize)>,
    /// Fracture wedge center angle in radians.
    pub fracture_angle: f64,
}

const AIR_HU: i16 = -1000;
const BONE_HU_MIN: f64 = 300.0;
const BONE_HU_MAX: f64 = 1500.0;

/// Generate one synthetic case. Deterministic in `seed`.
pub fn generate_case(
    seed: u64,
    positive: bool,
    n: usize,
    side: usize,
) -> Result<HUVolume, DataError> {
    generate_case_geo(seed, positive, n, side).map(|(v, _)| v)
}

/// As [`generate_case`], but also returns the ground-truth geometry.
pub fn generate_case_geo(
    seed: u64,
    positive: bool,
    n: usize,
    side: usize,
) -> Result<(HUVolume, PhantomGeometry), DataError> {
    if n < 4 {
        return Err(DataError::Param(format!("need at least 4 slices, got {n}")));
    }
    if side < 32 {
        return Err(DataError::Param(format!("side must be >= 32, got {side}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;

    // Case-level geometry.
    let soft_radius = rng.gen_range(0.34..=0.40) * s;
    let ring_outer = rng.gen_range(0.20..=0.25) * s;
    let thickness = rng.gen_range(0.06..=0.09) * s;
    let ring_inner = ring_outer - thickness;
    let amp_r = rng.gen_range(0.03..=0.08) * s;
    let amp_c = rng.gen_range(0.03..=0.08) * s;
    let phase_r = rng.gen_range(0.0..2.0 * PI);
    let phase_c = rng.gen_range(0.0..2.0 * PI);
    let bone_base = rng.gen_range(700.0..=1100.0);

    let centers: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            let u = t as f64 / n as f64;
            (
                s / 2.0 + amp_r * (2.0 * PI * u + phase_r).sin(),
                s / 2.0 + amp_c * (2.0 * PI * u + phase_c).sin(),
            )
        })
        .collect();

    // Fracture placement (geometry only; no rng draws in the mask pass).
    let (fracture_run, fracture_angle) = if positive {
        let run_len = rng.gen_range(1..=3usize).min(n);
        let start = rng.gen_range(0..=n - run_len);
        (Some((start, start + run_len - 1)), rng.gen_range(0.0..2.0 * PI))
    } else {
        (None, 0.0)
    };

    // Demographic stub.
    let (age_mean, age_std, male_prob) = if positive {
        (59.42, 22.91, 0.661)
    } else {
        (50.40, 21.7, 0.648)
    };
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
    let age = (age_mean + age_std * z).clamp(18.0, 99.0) as f32;
    let sex = if rng.gen_bool(male_prob) { Sex::Male } else { Sex::Female };

    let r_mid = (ring_inner + ring_outer) / 2.0;
    let fracture_masks: Vec<Option<FractureMasks>> = (0..n)
        .map(|t| {
            let in_run = fracture_run.is_some_and(|(a, b)| t >= a && t <= b);
            in_run.then(|| {
                fracture_mask(side, centers[t], ring_inner, ring_outer, fracture_angle, r_mid)
            })
        })
        .collect();

    let mut slices = Vec::with_capacity(n);
    let mut image_labels = Vec::with_capacity(n);
    let mut fracture_boxes = Vec::with_capacity(n);
    for t in 0..n {
        let (cr, cc) = centers[t];
        let mask = fracture_masks[t].as_ref();
        let mut pixels = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
                let in_ring = d >= ring_inner && d <= ring_outer;
                let fractured = in_ring && mask.is_some_and(|m| m.wedge[r * side + c]);
                let sclerotic = in_ring && mask.is_some_and(|m| m.margin[r * side + c]);
                let hu = if fractured {
                    40.0 + rng.gen_range(-20.0..=20.0)
                } else if sclerotic {
                    // bright sclerotic margin flanking the fracture line
                    BONE_HU_MAX - rng.gen_range(0.0..=50.0)
                } else if in_ring {
                    (bone_base + rng.gen_range(-120.0f64..=120.0)).clamp(BONE_HU_MIN, BONE_HU_MAX)
                } else if d <= soft_radius {
                    40.0 + rng.gen_range(-20.0..=20.0)
                } else {
                    AIR_HU as f64
                };
                pixels.push(hu.round() as i16);
            }
        }
        // Box from the painted pixels of this slice.
        let boxes = match mask {
            None => Vec::new(),
            Some(m) => {
                let mut bb: Option<(usize, usize, usize, usize)> = None;
                for r in 0..side {
                    for c in 0..side {
                        let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
                        if m.wedge[r * side + c] && d >= ring_inner && d <= ring_outer {
                            bb = Some(match bb {
                                None => (r, r, c, c),
                                Some((r0, r1, c0, c1)) => {
                                    (r0.min(r), r1.max(r), c0.min(c), c1.max(c))
                                }
                            });
                        }
                    }
                }
                let (r0, r1, c0, c1) =
                    bb.expect("fracture wedge always intersects the ring");
                vec![FractureBox {
                    r0: r0 as u16,
                    r1: r1 as u16,
                    c0: c0 as u16,
                    c1: c1 as u16,
                }]
            }
        };
        image_labels.push(u8::from(!boxes.is_empty()));
        fracture_boxes.push(boxes);
        slices.push(HuSlice::new(side, side, pixels));
    }

    let volume = HUVolume {
        case_id: format!("case-{seed:08}"),
        slices,
        image_labels,
        case_label: u8::from(positive),
        fracture_boxes,
        age,
        sex,
    };
    let geometry = PhantomGeometry {
        centers,
        ring_inner,
        ring_outer,
        soft_radius,
        fracture_run,
        fracture_angle,
    };
    Ok((volume, geometry))
}

/// Wedge and margin masks of one fractured slice.
struct FractureMasks {
    /// Dark fracture line: soft-tissue HU cut through the ring.
    wedge: Vec<bool>,
    /// Bright sclerotic margin flanking the wedge on both sides.
    margin: Vec<bool>,
}

impl FractureMasks {
    fn new(len: usize) -> Self {
        FractureMasks { wedge: vec![false; len], margin: vec![false; len] }
    }
}

/// Pixels of the fracture wedge: within the ring band and within a small
/// angular window around `angle`. A thin bright rim at the outer edge is
/// spared so the ring outline (and with it the foreground crop box)
/// survives the cut. The margin mask covers a narrow angular band on
/// each flank of the wedge over the full ring thickness. Widens the
/// window until at least one wedge pixel is hit (always terminates well
/// before the cap for side >= 32).
fn fracture_mask(
    side: usize,
    center: (f64, f64),
    inner: f64,
    outer: f64,
    angle: f64,
    r_mid: f64,
) -> FractureMasks {
    let (cr, cc) = center;
    let rim = (0.35 * (outer - inner)).min(1.5);
    let wedge_outer = outer - rim;
    let mut half_width = 5.0 / r_mid;
    let margin_arc = 2.5 / r_mid;
    for _ in 0..8 {
        let mut masks = FractureMasks::new(side * side);
        let mut any = false;
        for r in 0..side {
            for c in 0..side {
                let dr = r as f64 - cr;
                let dc = c as f64 - cc;
                let d = (dr * dr + dc * dc).sqrt();
                if d < inner || d > outer {
                    continue;
                }
                let mut delta = (dr.atan2(dc) - angle).rem_euclid(2.0 * PI);
                if delta > PI {
                    delta -= 2.0 * PI;
                }
                let delta = delta.abs();
                if delta <= half_width && d <= wedge_outer {
                    masks.wedge[r * side + c] = true;
                    any = true;
                } else if delta <= half_width + margin_arc {
                    masks.margin[r * side + c] = true;
                }
            }
        }
        if any {
            return masks;
        }
        half_width *= 1.5;
    }
    panic!("fracture wedge missed the ring entirely");
}
