//! Dense tensors, reverse-mode differentiation, parameter storage, the
//! Adam optimizer, seeded randomness, finite-difference gradient checks
//! and the on-disk checkpoint archive.

mod adam;
mod checkpoint;
mod gradcheck;
mod init;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, TensorRecord, MANIFEST_FILE, TENSOR_FILE};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use init::{scaled_normal, xavier_uniform};
pub use params::{ParamEntry, ParamStore};
pub use rng::RngStream;
pub use tape::{Gradients, SparseRows, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for {op} (len {len})")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("missing gradient for trainable parameter {0:?}")]
    MissingGradient(String),
    #[error("store has no trainable parameters")]
    NothingToOptimize,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("loss closure failed: {0}")]
    Closure(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
