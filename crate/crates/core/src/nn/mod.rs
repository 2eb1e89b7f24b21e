//! From-scratch CNN: tensors, layer kernels, the inception-lite network,
//! optimizers, training and checkpoints.

pub mod checkpoint;
pub mod network;
pub mod ops;
pub mod optim;
mod tensor;
pub mod train;

use thiserror::Error;

pub use network::{images_to_tensor, InceptionConfig, InceptionLite, Network, NetworkConfig};
pub use ops::{ConvSpec, Padding, PoolSpec};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;
pub use train::{predict_batch, train, EpochStats, LabeledImage, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input is {}x{}, network expects {}x{}", actual.0, actual.1, expected.0, expected.1)]
    WrongInputSize {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training set contains a single class")]
    SingleClassDataset,
    #[error("loss diverged (non-finite) in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint crc mismatch: stored {stored:#010x}, computed {actual:#010x}")]
    CheckpointCrcMismatch { stored: u32, actual: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
