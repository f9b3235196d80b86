//! Hounsfield-unit windowing.

use serde::{Deserialize, Serialize};

/// An HU display window: values below center - width/2 map to 0, values
/// above center + width/2 map to 1, linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width: f64,
    pub center: f64,
    pub name: String,
}

impl WindowSpec {
    pub fn new(width: f64, center: f64, name: &str) -> Self {
        assert!(width > 0.0, "window width must be positive");
        WindowSpec {
            width,
            center,
            name: name.to_string(),
        }
    }

    pub fn soft_tissue() -> Self {
        Self::new(300.0, 80.0, "soft_tissue")
    }

    pub fn standard_bone() -> Self {
        Self::new(1800.0, 500.0, "standard_bone")
    }

    pub fn gross_bone() -> Self {
        Self::new(650.0, 400.0, "gross_bone")
    }

    /// The three channels in their stacking order.
    pub fn all_three() -> [WindowSpec; 3] {
        [
            Self::soft_tissue(),
            Self::standard_bone(),
            Self::gross_bone(),
        ]
    }
}

/// clamp((x - (c - w/2)) / w, 0, 1); monotone nondecreasing in x.
pub fn hu_window(x: f64, spec: &WindowSpec) -> f64 {
    let lower = spec.center - spec.width / 2.0;
    ((x - lower) / spec.width).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_center_maps_to_midpoint() {
        assert_eq!(hu_window(80.0, &WindowSpec::soft_tissue()), 0.5);
    }

    #[test]
    fn below_lower_bound_clamps_to_zero() {
        // standard bone lower bound is -400
        assert_eq!(hu_window(-1000.0, &WindowSpec::standard_bone()), 0.0);
        assert_eq!(hu_window(-400.0, &WindowSpec::standard_bone()), 0.0);
    }

    #[test]
    fn upper_bound_maps_to_one() {
        // gross bone upper bound is 400 + 325 = 725
        assert_eq!(hu_window(725.0, &WindowSpec::gross_bone()), 1.0);
        assert_eq!(hu_window(3000.0, &WindowSpec::gross_bone()), 1.0);
    }

    #[test]
    fn monotone_and_bounded_over_full_hu_sweep() {
        for spec in WindowSpec::all_three() {
            let lower = spec.center - spec.width / 2.0;
            let upper = spec.center + spec.width / 2.0;
            let mut prev = -1.0f64;
            for hu in -1024..=3071 {
                let v = hu_window(hu as f64, &spec);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev, "{}: not monotone at {hu}", spec.name);
                if (hu as f64) < lower {
                    assert_eq!(v, 0.0);
                }
                if hu as f64 > upper {
                    assert_eq!(v, 1.0);
                }
                prev = v;
            }
        }
    }
}
