//! Model assembly, AdamW, the mini-batch training loop and checkpoints.

mod checkpoint;
mod config;
mod model;
mod optim;
mod trainer;

pub use checkpoint::{checkpoint_paths, Checkpoint, CHECKPOINT_VERSION};
pub use config::{LrSchedule, ModelConfig, TrainConfig, Variant};
pub use model::{argmax, ForwardPass, Model, ModelParams, PreparedGraph};
pub use optim::{adamw_step, cosine_lr, AdamState, AdamW};
pub use trainer::{metrics_csv, train, train_from, EpochLog, TrainOutcome};
