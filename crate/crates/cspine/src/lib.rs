//! Cervical-spine CT fracture detection at desk scale.
//!
//! End-to-end pipeline: Hounsfield-unit windowing and cropping, a residual
//! CNN image-level classifier, a bidirectional LSTM case-level classifier
//! trained in two phases, 7-fold cross-validated evaluation with a full
//! confusion-matrix metric suite, and Grad-CAM heatmaps. Runs on synthetic
//! CT phantoms.
//!
//! Numeric code is generic over the element type: `f32` for training,
//! `f64` for gradient verification.

pub mod data;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;
pub use tensor::{Tensor, TensorError};

/// Training-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Verification-precision tensor.
pub type Tensor64 = Tensor<f64>;
