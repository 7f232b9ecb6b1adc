//! The RADAR agent: decision-time planning on arrival, real TD update and
//! background exploration on transition, process learning from real
//! arrivals and departures.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::catalog::Catalog;
use crate::env::{self, Action, ActionSet, DomainCapacities, State};
use crate::error::{Error, Result};
use crate::model::SampleModel;
use crate::planner::{self, PlanStats, TrajectoryParams};
use crate::rl::{self, ExplorationPolicy, Hyperparameters, UpdateRule, ValueTable};
use crate::rng::{purpose, stream, SimRng};
use crate::traffic::ProcessLearner;

/// Callbacks the simulator drives for every real event.
pub trait Allocator {
    /// A request arrived; returns the allocation for it.
    fn on_arrival(&mut self, s: &State, t: f64, feasible: ActionSet) -> Result<Action>;

    /// The state following the last decision is known.
    fn on_transition(&mut self, next: &State, next_feasible: ActionSet) -> Result<()>;

    /// An instance of 0-based type `index` left after `holding` hours.
    fn on_departure(&mut self, index: usize, holding: f64) -> Result<()>;

    /// Enables or freezes learning (value updates, process learning,
    /// exploration).
    fn set_learning(&mut self, enabled: bool);

    fn stats(&self) -> AgentStats;

    /// Called before the first event of an episode.
    fn begin_episode(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgentStats {
    pub decisions: u64,
    pub real_updates: u64,
    pub synthetic_updates: u64,
    pub background: PlanStats,
    pub decision_explore: PlanStats,
    pub decision_exploit: PlanStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantName {
    Mfrl,
    MbBgex,
    MbDtp,
    MbFull,
}

impl VariantName {
    pub const ALL: [VariantName; 4] = [VariantName::Mfrl, VariantName::MbBgex, VariantName::MbDtp, VariantName::MbFull];

    pub fn name(self) -> &'static str {
        match self {
            VariantName::Mfrl => "mfrl",
            VariantName::MbBgex => "mb-bgex",
            VariantName::MbDtp => "mb-dtp",
            VariantName::MbFull => "mb-full",
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        VariantName::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::UnknownVariant(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanningModule {
    pub enabled: bool,
    pub params: TrajectoryParams,
}

impl PlanningModule {
    pub const fn on(theta: u32, kappa: u32) -> Self {
        PlanningModule {
            enabled: true,
            params: TrajectoryParams::new(theta, kappa),
        }
    }

    pub const fn off(theta: u32, kappa: u32) -> Self {
        PlanningModule {
            enabled: false,
            params: TrajectoryParams::new(theta, kappa),
        }
    }

    fn active(&self) -> Option<TrajectoryParams> {
        self.enabled.then_some(self.params)
    }
}

pub const BACKGROUND_DEFAULT: TrajectoryParams = TrajectoryParams::new(5, 3);
pub const DECISION_EXPLORE_DEFAULT: TrajectoryParams = TrajectoryParams::new(3, 2);
pub const DECISION_EXPLOIT_DEFAULT: TrajectoryParams = TrajectoryParams::new(1, 3);

/// Everything that defines an agent's behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantConfig {
    pub background: PlanningModule,
    pub decision_explore: PlanningModule,
    pub decision_exploit: PlanningModule,
    pub rule: UpdateRule,
    pub hyper: Hyperparameters,
    pub exploration: ExplorationPolicy,
    pub learning_enabled: bool,
    /// EMA smoothing factor of the process learner.
    pub ema_eta: f64,
    /// Mean assumed for processes that have not been observed yet, hours.
    pub prior_mean: f64,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig::from_name(VariantName::MbFull)
    }
}

/// Optional `(theta, kappa)` replacements per planning module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlanningOverrides {
    pub background: Option<TrajectoryParams>,
    pub decision_explore: Option<TrajectoryParams>,
    pub decision_exploit: Option<TrajectoryParams>,
}

impl VariantConfig {
    pub const DEFAULT_EMA_ETA: f64 = 0.002;
    pub const DEFAULT_PRIOR_MEAN: f64 = 1.0;

    pub fn from_name(name: VariantName) -> Self {
        let (bg, de, dx) = match name {
            VariantName::Mfrl => (false, false, false),
            VariantName::MbBgex => (true, false, false),
            VariantName::MbDtp => (false, true, true),
            VariantName::MbFull => (true, true, true),
        };
        let module = |enabled, p: TrajectoryParams| PlanningModule { enabled, params: p };
        VariantConfig {
            background: module(bg, BACKGROUND_DEFAULT),
            decision_explore: module(de, DECISION_EXPLORE_DEFAULT),
            decision_exploit: module(dx, DECISION_EXPLOIT_DEFAULT),
            rule: UpdateRule::RLearning,
            hyper: Hyperparameters::default(),
            exploration: ExplorationPolicy::default(),
            learning_enabled: true,
            ema_eta: Self::DEFAULT_EMA_ETA,
            prior_mean: Self::DEFAULT_PRIOR_MEAN,
        }
    }

    pub fn apply(&mut self, overrides: &PlanningOverrides) {
        if let Some(p) = overrides.background {
            self.background.params = p;
        }
        if let Some(p) = overrides.decision_explore {
            self.decision_explore.params = p;
        }
        if let Some(p) = overrides.decision_exploit {
            self.decision_exploit.params = p;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.exploration.validate()?;
        if !(self.ema_eta > 0.0 && self.ema_eta <= 1.0) {
            return Err(Error::Config("ema_eta must lie in (0, 1]".into()));
        }
        if !(self.prior_mean > 0.0 && self.prior_mean.is_finite()) {
            return Err(Error::Config("prior_mean must be positive".into()));
        }
        Ok(())
    }

    /// Expected TD updates for one real request with `root_actions`
    /// feasible actions, learning enabled.
    pub fn updates_per_request(&self, root_actions: usize) -> u64 {
        let steps = |m: &PlanningModule| m.active().map_or(0, |p| p.steps());
        1 + steps(&self.background) + steps(&self.decision_explore) + root_actions as u64 * steps(&self.decision_exploit)
    }
}

/// Looks up one of the four named variants and applies planning overrides.
pub fn make_variant(name: &str, overrides: &PlanningOverrides) -> Result<VariantConfig> {
    let mut cfg = VariantConfig::from_name(name.parse()?);
    cfg.apply(overrides);
    Ok(cfg)
}

#[derive(Debug, Clone)]
struct Pending {
    state: State,
    feasible: ActionSet,
    action: Action,
}

/// RADAR agent for one replication.
#[derive(Debug, Clone)]
pub struct RadarAgent {
    catalog: Arc<Catalog>,
    caps: DomainCapacities,
    config: VariantConfig,
    table: ValueTable,
    learner: ProcessLearner,
    policy_rng: SimRng,
    planner_rng: SimRng,
    model_rng: SimRng,
    pending: Option<Pending>,
    stats: AgentStats,
}

impl RadarAgent {
    pub fn new(catalog: Arc<Catalog>, caps: DomainCapacities, config: VariantConfig, seed: u64) -> Self {
        let learner = ProcessLearner::new(catalog.len(), config.ema_eta, config.prior_mean);
        RadarAgent {
            table: ValueTable::new(config.hyper),
            learner,
            policy_rng: stream(seed, purpose::POLICY, 0),
            planner_rng: stream(seed, purpose::PLANNER, 0),
            model_rng: stream(seed, purpose::MODEL, 0),
            catalog,
            caps,
            config,
            pending: None,
            stats: AgentStats::default(),
        }
    }

    pub fn config(&self) -> &VariantConfig {
        &self.config
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut ValueTable {
        &mut self.table
    }

    pub fn into_table(self) -> ValueTable {
        self.table
    }

    pub fn learner(&self) -> &ProcessLearner {
        &self.learner
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    fn plan_decision_time(&mut self, s: &State) -> Result<()> {
        let rule = self.config.rule;
        let mut model = SampleModel::new(&self.catalog, self.caps, &self.learner, &mut self.model_rng);
        if let Some(p) = self.config.decision_explore.active() {
            let st = planner::explore(&mut self.table, rule, &mut model, s, None, p, &mut self.planner_rng)?;
            self.stats.decision_explore.merge(st);
            self.stats.synthetic_updates += st.updates;
        }
        if let Some(p) = self.config.decision_exploit.active() {
            let st = planner::exploit(&mut self.table, rule, &mut model, s, p)?;
            self.stats.decision_exploit.merge(st);
            self.stats.synthetic_updates += st.updates;
        }
        Ok(())
    }

    fn plan_background(&mut self, s: &State, a: Action) -> Result<()> {
        let Some(p) = self.config.background.active() else {
            return Ok(());
        };
        let mut model = SampleModel::new(&self.catalog, self.caps, &self.learner, &mut self.model_rng);
        let st = planner::explore(&mut self.table, self.config.rule, &mut model, s, Some(a), p, &mut self.planner_rng)?;
        self.stats.background.merge(st);
        self.stats.synthetic_updates += st.updates;
        Ok(())
    }
}

impl Allocator for RadarAgent {
    fn on_arrival(&mut self, s: &State, t: f64, feasible: ActionSet) -> Result<Action> {
        if feasible.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let key = s.key();
        let action = if self.config.learning_enabled {
            self.learner.observe_arrival(s.request(), t)?;
            self.plan_decision_time(s)?;
            rl::select_action(
                &self.table,
                &key,
                feasible,
                &self.config.exploration,
                self.stats.decisions,
                &mut self.policy_rng,
            )?
        } else {
            self.table.best_action(&key, feasible)?.0
        };
        self.pending = Some(Pending {
            state: s.clone(),
            feasible,
            action,
        });
        self.stats.decisions += 1;
        Ok(action)
    }

    fn on_transition(&mut self, next: &State, next_feasible: ActionSet) -> Result<()> {
        let Pending {
            state,
            feasible,
            action,
        } = self.pending.take().ok_or(Error::NoPendingDecision)?;
        if !self.config.learning_enabled {
            return Ok(());
        }
        let reward = env::immediate_reward(state.request(), action, &self.catalog)?;
        self.table
            .td_update(self.config.rule, &state.key(), feasible, action, reward, &next.key(), next_feasible);
        self.stats.real_updates += 1;
        self.plan_background(&state, action)
    }

    fn on_departure(&mut self, index: usize, holding: f64) -> Result<()> {
        if !(holding >= 0.0) {
            return Err(Error::NegativeHolding(holding));
        }
        if self.config.learning_enabled {
            self.learner.observe_departure(index, holding)?;
        }
        Ok(())
    }

    fn set_learning(&mut self, enabled: bool) {
        self.config.learning_enabled = enabled;
    }

    fn stats(&self) -> AgentStats {
        self.stats
    }

    fn begin_episode(&mut self) {
        self.pending = None;
        self.learner.reset_timestamps();
    }
}

/// A fixed value table evaluated greedily; never learns.
#[derive(Debug, Clone)]
pub struct FrozenPolicy {
    table: ValueTable,
    decisions: u64,
}

impl FrozenPolicy {
    pub fn new(table: ValueTable) -> Self {
        FrozenPolicy { table, decisions: 0 }
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }
}

impl Allocator for FrozenPolicy {
    fn on_arrival(&mut self, s: &State, _t: f64, feasible: ActionSet) -> Result<Action> {
        self.decisions += 1;
        Ok(self.table.best_action(&s.key(), feasible)?.0)
    }

    fn on_transition(&mut self, _next: &State, _next_feasible: ActionSet) -> Result<()> {
        Ok(())
    }

    fn on_departure(&mut self, _index: usize, holding: f64) -> Result<()> {
        if !(holding >= 0.0) {
            return Err(Error::NegativeHolding(holding));
        }
        Ok(())
    }

    fn set_learning(&mut self, _enabled: bool) {}

    fn stats(&self) -> AgentStats {
        AgentStats {
            decisions: self.decisions,
            ..AgentStats::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::feasible_actions;

    fn agent(name: VariantName) -> RadarAgent {
        RadarAgent::new(
            Arc::new(Catalog::reference()),
            DomainCapacities::new(100, 50),
            VariantConfig::from_name(name),
            7,
        )
    }

    #[test]
    fn variant_flags() {
        let flags = |v: VariantConfig| (v.background.enabled, v.decision_explore.enabled, v.decision_exploit.enabled);
        let none = PlanningOverrides::default();
        assert_eq!(flags(make_variant("mfrl", &none).unwrap()), (false, false, false));
        assert_eq!(flags(make_variant("mb-bgex", &none).unwrap()), (true, false, false));
        assert_eq!(flags(make_variant("mb-dtp", &none).unwrap()), (false, true, true));
        let full = make_variant("MB-Full", &none).unwrap();
        assert_eq!(flags(full.clone()), (true, true, true));
        assert_eq!(full.background.params, TrajectoryParams::new(5, 3));
        assert_eq!(full.decision_explore.params, TrajectoryParams::new(3, 2));
        assert_eq!(full.decision_exploit.params, TrajectoryParams::new(1, 3));
        assert_eq!(make_variant("dyna", &none), Err(Error::UnknownVariant("dyna".into())));

        let o = PlanningOverrides {
            background: Some(TrajectoryParams::new(10, 1)),
            ..Default::default()
        };
        assert_eq!(make_variant("mb-bgex", &o).unwrap().background.params, TrajectoryParams::new(10, 1));
    }

    #[test]
    fn greedy_choice_when_not_exploring() {
        let mut a = agent(VariantName::Mfrl);
        a.config.exploration = ExplorationPolicy::greedy();
        let cat = Catalog::reference();
        let s = State::empty(DomainCapacities::new(100, 50), &cat, 0).unwrap();
        a.table.set(&s.key(), Action::Local, 70.0);
        let f = feasible_actions(&s, &cat);
        assert_eq!(a.on_arrival(&s, 0.0, f).unwrap(), Action::Local);
    }

    #[test]
    fn mfrl_single_update_per_request() {
        let mut a = agent(VariantName::Mfrl);
        let cat = Catalog::reference();
        let s = State::empty(DomainCapacities::new(100, 50), &cat, 0).unwrap();
        let f = feasible_actions(&s, &cat);
        a.on_arrival(&s, 0.0, f).unwrap();
        a.on_transition(&s.with_request(1).unwrap(), f).unwrap();
        assert_eq!(a.table.update_count(), 1);
        assert_eq!(a.stats().synthetic_updates, 0);
    }

    #[test]
    fn background_counts() {
        let mut a = agent(VariantName::MbBgex);
        let cat = Catalog::reference();
        let s = State::empty(DomainCapacities::new(100, 50), &cat, 0).unwrap();
        let f = feasible_actions(&s, &cat);
        a.on_arrival(&s, 0.0, f).unwrap();
        a.on_transition(&s.with_request(1).unwrap(), f).unwrap();
        assert_eq!(a.table.update_count(), 16);
    }

    #[test]
    fn frozen_mode_changes_nothing() {
        let mut a = agent(VariantName::MbFull);
        a.set_learning(false);
        let cat = Catalog::reference();
        let s = State::empty(DomainCapacities::new(100, 50), &cat, 0).unwrap();
        let f = feasible_actions(&s, &cat);
        let learner = a.learner.clone();
        a.on_arrival(&s, 0.5, f).unwrap();
        a.on_transition(&s.with_request(1).unwrap(), f).unwrap();
        a.on_departure(0, 2.5).unwrap();
        assert_eq!(a.table.update_count(), 0);
        assert!(a.table.is_empty());
        assert_eq!(a.learner, learner);
    }

    #[test]
    fn departures_feed_the_learner() {
        let mut a = agent(VariantName::Mfrl);
        a.on_departure(0, 2.5).unwrap();
        assert_eq!(a.learner.departure_estimator(0).mean(), 2.5);
        assert_eq!(a.on_departure(0, -1.0), Err(Error::NegativeHolding(-1.0)));
    }

    #[test]
    fn transition_requires_pending() {
        let mut a = agent(VariantName::Mfrl);
        let cat = Catalog::reference();
        let s = State::empty(DomainCapacities::new(100, 50), &cat, 0).unwrap();
        assert_eq!(a.on_transition(&s, ActionSet::ALL), Err(Error::NoPendingDecision));
    }

    #[test]
    fn update_formula() {
        let full = VariantConfig::from_name(VariantName::MbFull);
        assert_eq!(full.updates_per_request(3), 1 + 15 + 6 + 9);
        assert_eq!(VariantConfig::from_name(VariantName::Mfrl).updates_per_request(3), 1);
    }
}
