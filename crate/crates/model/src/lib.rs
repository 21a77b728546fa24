//! The 3D UX-Net segmentation model.
//!
//! An encoder of large-kernel depthwise convolution blocks over a five-level
//! resolution ladder, a convolutional decoder with instance-normalized
//! residual blocks, and the bookkeeping around them: a named parameter
//! registry, a binary checkpoint format, and closed-form cost analysis
//! (parameters, multiply-accumulates, receptive field) that is tested to
//! agree exactly with what the built network allocates.

pub mod analysis;
pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod registry;

pub use checkpoint::Checkpoint;
pub use config::{ConvKind, ScalingKind, UXNetConfig};
pub use model::UXNet3d;
pub use registry::ParamRegistry;

/// Errors specific to model construction and serialization.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] uxnet_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
