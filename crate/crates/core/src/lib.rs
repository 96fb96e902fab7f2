//! Safe reinforcement learning for load-following control: a reference
//! plant, sparse system identification of a reduced-order model, a
//! constrained environment, a small neural-network kernel and a
//! Lagrangian PPO trainer, plus evaluation metrics and persistence.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod plant;
pub mod ppo;
pub mod seed;
pub mod sysid;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use env::{Backing, Bounds, Env, EpisodeLog, RewardVector, Scenario, ScenarioSet, Split, StepRecord};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use nn::{Adam, Mlp, Policy};
pub use plant::{PlantConfig, PlantState, TrajectoryRow};
pub use ppo::{EpochStats, LagrangeState, TrainConfig, TrainerState};
pub use sysid::{FitReport, IdentifyOptions, RomModel, Trajectory};
