//! Dense float64 tensors with reverse-mode automatic differentiation.

mod checkpoint;
mod gradcheck;
pub mod nn;
mod optim;
mod params;
mod tape;
#[allow(clippy::module_inception)]
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, grad_check_on};
pub use optim::{grad_norm, Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not fit shape {shape:?}")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("axis {axis} invalid for shape {shape:?}")]
    BadAxis { axis: usize, shape: Vec<usize> },
    #[error("slice [{start}, {start}+{len}) invalid for shape {shape:?}")]
    BadSlice {
        start: usize,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this tape")]
    TapeConsumed,
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
