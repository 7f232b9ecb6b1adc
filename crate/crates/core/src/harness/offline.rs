//! The offline reference: R-Learning trained on many trajectories of the
//! true traffic processes, then evaluated greedily.

use crate::agent::{FrozenPolicy, RadarAgent, VariantConfig, VariantName};
use crate::error::Result;

use super::sim::{run_episode, EpisodeOptions, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineParams {
    /// Number of training trajectories.
    pub theta: u64,
    /// Requests per trajectory.
    pub kappa: u64,
    /// Trajectory `j` starts at `j / theta * span` hours so that training
    /// covers a time-varying schedule evenly. Zero starts all at 0.
    pub span: f64,
}

impl OfflineParams {
    pub fn new(theta: u64, kappa: u64) -> Self {
        OfflineParams { theta, kappa, span: 0.0 }
    }
}

impl Default for OfflineParams {
    fn default() -> Self {
        OfflineParams::new(1_000, 10_000)
    }
}

/// Seed of offline trajectory `j`.
pub fn trajectory_seed(seed: u64, j: u64) -> u64 {
    seed ^ (j.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains a model-free R-Learning agent (with the behavior policy of
/// `base`) on `theta` independent trajectories of `kappa` simulated
/// requests each, sharing one value table, and returns that table frozen.
pub fn train_offline(scenario: &Scenario, base: &VariantConfig, params: OfflineParams, seed: u64) -> Result<FrozenPolicy> {
    let mut config = VariantConfig {
        rule: base.rule,
        hyper: base.hyper,
        exploration: base.exploration,
        ema_eta: base.ema_eta,
        prior_mean: base.prior_mean,
        ..VariantConfig::from_name(VariantName::Mfrl)
    };
    config.learning_enabled = true;
    let mut agent = RadarAgent::new(scenario.catalog.clone(), scenario.capacities, config, seed);
    for j in 0..params.theta {
        let mut options = EpisodeOptions::new(params.kappa);
        if params.span > 0.0 {
            options.start_time = j as f64 / params.theta as f64 * params.span;
        }
        run_episode(scenario, &options, &mut agent, trajectory_seed(seed, j))?;
    }
    Ok(FrozenPolicy::new(agent.into_table()))
}
