//! The sparse-residual binary classifier: architecture plans, parameters,
//! analytic forward/backward, and an Adam trainer.

pub mod adam;
pub mod arch;
pub mod layers;
pub mod net;
pub mod params;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use arch::{ArchitectureConfig, NetPlan};
pub use net::{backward, bce_loss, forward, forward_logit, predict};
pub use params::ModelParams;
pub use train::{train_local, EpochStats, TrainConfig, Trainer};
