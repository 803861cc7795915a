//! Core library of the policy-optimization laboratory.
//!
//! The crate is organized around a single training pipeline: a hand-rolled
//! MLP gradient engine ([`grad`]), action-distribution heads ([`policy`]),
//! surrogate objectives and losses ([`objectives`]), generalized advantage
//! estimation ([`gae`]), distribution-distance measures ([`divergence`]),
//! small deterministic environments with exact tabular oracles ([`envs`]),
//! the training loop itself ([`trainer`]), and a synthetic ratio-optimization
//! benchmark ([`bench`]). [`verify`] bundles the brute-force oracles and
//! property suites behind the `verify` CLI command.
//!
//! Everything is `f64`, seeded, and deterministic: identical seeds produce
//! bit-identical parameter trajectories and metrics files on one platform.

pub mod bench;
pub mod divergence;
pub mod envs;
pub mod error;
pub mod gae;
pub mod grad;
pub mod linalg;
pub mod objectives;
pub mod policy;
pub mod rng;
pub mod trainer;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use objectives::{LossBreakdown, ObjectiveKind};
pub use trainer::{MetricsRecord, TrainConfig, Trainer, TrainerCheckpoint};
pub use types::Action;
