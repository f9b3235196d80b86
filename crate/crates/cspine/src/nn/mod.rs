//! Neural-network layers, loss, optimizer, and checkpoint persistence.

mod adam;
mod checkpoint;
mod cnn;
mod dropout;
mod init;
mod loss;
mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{ArchDescriptor, ModelCheckpoint, NamedTensor, TrainMeta, CHECKPOINT_VERSION};
pub use cnn::{cnn_forward, residual_block, BlockParams, CnnForward, CnnParams, ConvParams, ResidualCnnConfig};
pub use dropout::dropout;
pub use init::uniform_fan_in;
pub use loss::bce_loss;
pub use lstm::{blstm_forward, lstm_step, BlstmParams, CaseClassifierParams, LstmParams};

use crate::tensor::TensorError;

/// Errors from layer construction, training plumbing, and checkpoints.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("empty sequence")]
    EmptySequence,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
