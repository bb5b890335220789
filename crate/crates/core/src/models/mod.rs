//! The model zoo: configuration, input preparation, the nine architectures,
//! the distance baseline and checkpointing.

use thiserror::Error;

use crate::autodiff::TensorError;
use crate::embedding::EmbeddingError;
use crate::text::TextError;

pub mod checkpoint;
pub mod config;
pub mod prepare;
pub mod threshold;
pub mod zoo;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{Arch, ModelConfig};
pub use prepare::{PreparedExample, ReifiedInputs};
pub use threshold::{decide_distance, euclidean_distance, fit_distance_threshold, ThresholdError};
pub use zoo::Model;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("architecture {0} has no neural forward pass")]
    NotNeural(Arch),
    #[error("graph has no triplets")]
    NoTriplets,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("checkpoint read failed: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint is not valid JSON: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint parameter set mismatch: {0}")]
    CheckpointParams(String),
}
