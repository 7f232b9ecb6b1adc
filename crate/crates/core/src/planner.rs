//! Synthetic-experience planning: random-action exploration with forward
//! updates, and greedy exploitation rollouts with backward updates.

use rand::Rng;

use crate::env::{Action, ActionSet, State, StateKey};
use crate::error::Result;
use crate::model::GenerativeModel;
use crate::rl::{UpdateRule, ValueTable};

/// Breadth (`theta` trajectories) and depth (`kappa` steps) of planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryParams {
    pub theta: u32,
    pub kappa: u32,
}

impl TrajectoryParams {
    pub const fn new(theta: u32, kappa: u32) -> Self {
        TrajectoryParams { theta, kappa }
    }

    /// Model steps per rollout group.
    pub fn steps(&self) -> u64 {
        u64::from(self.theta) * u64::from(self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord {
    pub key: StateKey,
    pub feasible: ActionSet,
    pub action: Action,
    pub next_key: StateKey,
    pub next_feasible: ActionSet,
    pub reward: f64,
}

/// Counters reported by one planning call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlanStats {
    pub trajectories: u64,
    pub updates: u64,
    /// Rollouts started per first action, by ordinal.
    pub first_actions: [u64; 3],
}

impl PlanStats {
    pub fn merge(&mut self, other: PlanStats) {
        self.trajectories += other.trajectories;
        self.updates += other.updates;
        for (a, b) in self.first_actions.iter_mut().zip(other.first_actions) {
            *a += b;
        }
    }
}

/// `theta` trajectories of `kappa` random-action steps from `s0`, each
/// transition updated as soon as it is sampled. When `pinned` is given the
/// first action of every trajectory is fixed to it.
pub fn explore<M, R>(
    table: &mut ValueTable,
    rule: UpdateRule,
    model: &mut M,
    s0: &State,
    pinned: Option<Action>,
    params: TrajectoryParams,
    rng: &mut R,
) -> Result<PlanStats>
where
    M: GenerativeModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut stats = PlanStats::default();
    if params.kappa == 0 {
        return Ok(stats);
    }
    for _ in 0..params.theta {
        model.init_from(s0)?;
        stats.trajectories += 1;
        let mut s = s0.clone();
        let mut feasible = model.feasible(&s);
        for step in 0..params.kappa {
            let choices = match pinned {
                Some(a) if step == 0 => ActionSet::single(a),
                _ => feasible,
            };
            let a = choices
                .nth(rng.random_range(0..choices.len()))
                .expect("feasible set is never empty");
            if step == 0 {
                stats.first_actions[a.index()] += 1;
            }
            let (next, reward) = model.step(a)?;
            let next_feasible = model.feasible(&next);
            table.td_update(rule, &s.key(), feasible, a, reward, &next.key(), next_feasible);
            stats.updates += 1;
            s = next;
            feasible = next_feasible;
        }
    }
    Ok(stats)
}

/// For every feasible action of `s0`: `theta` greedy rollouts of depth
/// `kappa` starting with that action. Transitions are stacked during the
/// rollout and updated last-in-first-out once it ends, so a single call
/// propagates values from the end of the trajectory back to `s0`.
pub fn exploit<M>(
    table: &mut ValueTable,
    rule: UpdateRule,
    model: &mut M,
    s0: &State,
    params: TrajectoryParams,
) -> Result<PlanStats>
where
    M: GenerativeModel + ?Sized,
{
    let mut stats = PlanStats::default();
    if params.kappa == 0 {
        return Ok(stats);
    }
    let root_feasible = model.feasible(s0);
    let mut stack: Vec<TransitionRecord> = Vec::with_capacity(params.kappa as usize);
    for first in root_feasible.iter() {
        for _ in 0..params.theta {
            model.init_from(s0)?;
            stats.trajectories += 1;
            stats.first_actions[first.index()] += 1;
            let mut s = s0.clone();
            let mut feasible = root_feasible;
            for step in 0..params.kappa {
                let a = if step == 0 {
                    first
                } else {
                    table.best_action(&s.key(), feasible)?.0
                };
                let (next, reward) = model.step(a)?;
                let next_feasible = model.feasible(&next);
                stack.push(TransitionRecord {
                    key: s.key(),
                    feasible,
                    action: a,
                    next_key: next.key(),
                    next_feasible,
                    reward,
                });
                s = next;
                feasible = next_feasible;
            }
            while let Some(t) = stack.pop() {
                table.td_update(rule, &t.key, t.feasible, t.action, t.reward, &t.next_key, t.next_feasible);
                stats.updates += 1;
            }
        }
    }
    Ok(stats)
}
