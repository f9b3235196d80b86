//! Scalar abstraction over the floating-point element type.
//!
//! Training runs in `f32`; gradient verification runs in `f64` where
//! central differences are trustworthy. Everything numeric downstream is
//! generic over [`Scalar`] so both precisions share one code path.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Element type of tensors and everything built on them.
pub trait Scalar: Float + Sum + Debug + Display + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Little-endian `f32` encoding used by the checkpoint format.
    fn to_f32_le(self) -> [u8; 4];
    fn from_f32_le(bytes: [u8; 4]) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_f32_le(self) -> [u8; 4] {
        self.to_le_bytes()
    }
    #[inline]
    fn from_f32_le(bytes: [u8; 4]) -> Self {
        f32::from_le_bytes(bytes)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn to_f32_le(self) -> [u8; 4] {
        (self as f32).to_le_bytes()
    }
    #[inline]
    fn from_f32_le(bytes: [u8; 4]) -> Self {
        f32::from_le_bytes(bytes) as f64
    }
}
