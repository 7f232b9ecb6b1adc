//! Simulation driver, offline baseline, experiments and I/O.

pub mod config;
pub mod experiment;
pub mod offline;
pub mod sim;

pub use config::{ExperimentConfig, SlotBasis, SweepModule};
pub use experiment::{
    experiment_distribution, experiment_learning_interval, experiment_theta_kappa, experiment_variable_traffic,
    run_conditions, run_experiment, Aggregate, Condition, Contender, Report, RunRow,
};
pub use offline::{train_offline, OfflineParams};
pub use sim::{run_episode, Decision, EpisodeOptions, Event, EventQueue, RunMetrics, Scenario};

/// Variant label of the offline-trained reference policy.
pub const OFFLINE_VARIANT: &str = "rl-offline";
