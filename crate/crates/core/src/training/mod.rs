//! Composite loss, gradients, optimizer and the two-phase training protocol.

pub mod backward;
pub mod config;
pub mod data;
pub mod loss;
pub mod optim;
pub mod protocol;

pub use backward::{batch_gradients, batch_loss, Freeze};
pub use config::{RunConfig, TrainConfig};
pub use data::{prepare_data, prepare_split, resample_train, PreparedData, WeekSplit};
pub use loss::{LossBreakdown, LossConfig};
pub use optim::{AdamConfig, AdamW, Plateau};
pub use protocol::{evaluate_split, log_to_jsonl, train_model, EpochLog, TrainOutcome};
