//! Loss, the Adam optimizer, the plateau learning-rate schedule, and the
//! deterministic training loop.

mod adam;
mod loss;
mod schedule;
mod train;

pub use adam::{adam_step, AdamState};
pub use loss::sparse_ce_loss;
pub use schedule::{plateau_update, PlateauSchedule};
pub use train::{train, EpochStats, TrainConfig};
