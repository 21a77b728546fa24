//! Training and evaluation for volumetric segmentation: soft Dice and
//! cross-entropy losses composed on the autodiff tape, decoupled AdamW,
//! plateau learning-rate scheduling, sliding-window inference, hard-Dice
//! evaluation, and a deterministic training loop with resumable
//! checkpoints.

mod infer;
mod loss;
mod metrics;
mod optim;
mod trainer;

pub use infer::{sliding_window_infer, window_starts};
pub use loss::{deep_supervised_loss, dice_ce_loss, dice_loss, one_hot, DiceConfig};
pub use metrics::{argmax_channels, evaluate, hard_dice, EvalReport};
pub use optim::{AdamW, AdamWConfig, PlateauScheduler};
pub use trainer::{train, MetricLine, TrainConfig, TrainReport};

/// Errors surfaced while training or evaluating.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    /// The loss left the finite range; training aborted with context.
    #[error("step {step}: loss became {value}; aborting")]
    NonFiniteLoss { step: usize, value: f64 },
    /// A parameter's gradient went non-finite before the optimizer update.
    #[error("parameter {name}: non-finite gradient at step {step}")]
    NonFiniteGrad { name: String, step: usize },
    #[error("checkpoint is missing section {0}")]
    MissingSection(String),
    #[error(transparent)]
    Core(#[from] uxnet_core::CoreError),
    #[error(transparent)]
    Model(#[from] uxnet_model::ModelError),
    #[error(transparent)]
    Data(#[from] uxnet_data::DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;
