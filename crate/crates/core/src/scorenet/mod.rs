//! Score network, its training regimes, and checkpoints.

mod checkpoint;
mod gradcheck;
mod net;
mod params;
mod train;

pub use checkpoint::{load_trainer_state, save_trainer_state, Checkpoint};
pub use gradcheck::{check_gradients, GradCheck};
pub use net::{NetConfig, NetInput, ScoreNet, Workspace};
pub use train::{loss_log_csv, train, AdamW, EpochRecord, Regime, TrainConfig, Trainer};
pub use params::{ParamStore, TensorInfo};
