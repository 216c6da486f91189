//! Desk-scale framework for studying cross-node generalization of
//! distributed-acoustic-sensing (DAS) activity classifiers.
//!
//! The crate covers the full loop:
//!
//! - **signal synthesis** — walking / cycling phase-shift windows under
//!   configurable node heterogeneity ([`synth`], [`profile`])
//! - **preprocessing** — timing sync, window sampling, cleaning, splitting
//!   ([`pipeline`])
//! - **model** — a small sparse-residual CNN with analytic gradients and an
//!   Adam trainer, no external learning framework ([`model`])
//! - **federation** — FedAvg across simulated nodes ([`fedavg`])
//! - **meta-learning** — Reptile meta-initialization plus few-shot
//!   fine-tuning ([`reptile`])
//! - **experiments** — the SD / DA / DR evaluation protocol with CSV
//!   reporting ([`harness`])
//!
//! Everything is seeded and deterministic: the same configuration and seeds
//! reproduce bit-identical datasets, parameter trajectories, and reports.

pub mod audit;
pub mod dataset;
pub mod error;
pub mod event;
pub mod fedavg;
pub mod formats;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod profile;
pub mod reptile;
pub(crate) mod rng;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use window::PhaseWindow;
