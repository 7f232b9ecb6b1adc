//! The learned sample model: given `(s, a)` it returns one sampled next
//! state and the known reward.

use rand::Rng;

use crate::catalog::Catalog;
use crate::env::{self, Action, ActionSet, Domain, DomainCapacities, State};
use crate::error::Result;
use crate::traffic::ProcessLearner;

/// A generative environment that planning can roll out.
pub trait GenerativeModel {
    /// Resets the internal state to `s0`.
    fn init_from(&mut self, s0: &State) -> Result<()>;

    /// Applies `action` in the internal state and returns `(s', reward)`.
    fn step(&mut self, action: Action) -> Result<(State, f64)>;

    fn feasible(&self, s: &State) -> ActionSet;
}

/// Sample model backed by the catalog (rewards and demands) and the
/// learned arrival/holding processes. Borrowed for the duration of one
/// planning call; randomness comes only from the planning stream it holds.
pub struct SampleModel<'a, R: Rng + ?Sized> {
    catalog: &'a Catalog,
    caps: DomainCapacities,
    learner: &'a ProcessLearner,
    state: State,
    rng: &'a mut R,
    steps: u64,
}

impl<'a, R: Rng + ?Sized> SampleModel<'a, R> {
    pub fn new(
        catalog: &'a Catalog,
        caps: DomainCapacities,
        learner: &'a ProcessLearner,
        rng: &'a mut R,
    ) -> Self {
        let state = State::empty(caps, catalog, 0).expect("catalog is non-empty");
        SampleModel {
            catalog,
            caps,
            learner,
            state,
            rng,
            steps: 0,
        }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Number of synthetic steps taken.
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

impl<R: Rng + ?Sized> GenerativeModel for SampleModel<'_, R> {
    fn init_from(&mut self, s0: &State) -> Result<()> {
        s0.check(self.caps, self.catalog)?;
        self.state.clone_from(s0);
        Ok(())
    }

    fn step(&mut self, action: Action) -> Result<(State, f64)> {
        let catalog = self.catalog;
        let reward = env::immediate_reward(self.state.request(), action, catalog)?;
        env::apply_action_in_place(&mut self.state, action, catalog)?;

        // Next request: the earliest of one learned inter-arrival draw per type.
        let mut next_type = 0;
        let mut t_arrival = f64::INFINITY;
        for i in 0..catalog.len() {
            let t = self.learner.learned_interarrival(i, self.rng);
            if t < t_arrival {
                t_arrival = t;
                next_type = i;
            }
        }

        // Every alive instance draws a holding time; those ending before the
        // next arrival are released. Exponential residuals are memoryless,
        // so fresh draws stand in for remaining lifetimes.
        for domain in [Domain::Consumer, Domain::Provider] {
            for i in 0..catalog.len() {
                let alive = self.state.alive(domain)[i];
                let mut released = 0;
                for _ in 0..alive {
                    if self.learner.learned_holding(i, self.rng) < t_arrival {
                        released += 1;
                    }
                }
                if released > 0 {
                    env::release_in_place(&mut self.state, domain, i, released, catalog)?;
                }
            }
        }

        self.state.set_request(next_type)?;
        self.steps += 1;
        Ok((self.state.clone(), reward))
    }

    fn feasible(&self, s: &State) -> ActionSet {
        env::feasible_actions(s, self.catalog)
    }
}
