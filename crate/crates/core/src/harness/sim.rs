//! Discrete-event driver for one episode of real requests.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::agent::Allocator;
use crate::catalog::Catalog;
use crate::env::{self, Action, Domain, DomainCapacities, RewardLedger, State};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream, SimRng};
use crate::traffic::{self, ArrivalProcessSpec, DistributionKind, HoldingProcessSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Arrival {
        index: usize,
        t: f64,
    },
    Departure {
        id: u64,
        domain: Domain,
        index: usize,
        t_arrival: f64,
        t: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Arrival { t, .. } | Event::Departure { t, .. } => t,
        }
    }

    fn rank(&self) -> (u8, usize) {
        match *self {
            Event::Arrival { index, .. } => (0, index),
            Event::Departure { index, .. } => (1, index),
        }
    }
}

#[derive(Debug)]
struct Queued {
    event: Event,
    seq: u64,
}

impl Queued {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.event
            .time()
            .total_cmp(&other.event.time())
            .then_with(|| self.event.rank().cmp(&other.event.rank()))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        other.cmp_key(self)
    }
}

/// Time-ordered event queue. Equal timestamps pop arrivals before
/// departures, then by type index, then in insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue::default()
    }

    pub fn push(&mut self, event: Event) {
        self.seq += 1;
        self.heap.push(Queued { event, seq: self.seq });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|q| q.event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// The environment a run takes place in: catalog, capacities and the true
/// traffic processes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub catalog: Arc<Catalog>,
    pub capacities: DomainCapacities,
    pub arrivals: ArrivalProcessSpec,
    pub holding: HoldingProcessSpec,
}

impl Scenario {
    /// Nominal catalog rates with the given distribution kind for both
    /// inter-arrival and holding times.
    pub fn nominal(catalog: Arc<Catalog>, capacities: DomainCapacities, kind: DistributionKind) -> Self {
        Scenario {
            arrivals: ArrivalProcessSpec::nominal(&catalog, kind),
            holding: HoldingProcessSpec::nominal(&catalog, kind, false),
            catalog,
            capacities,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOptions {
    pub n_requests: u64,
    /// Learning is disabled before the request with this 0-based index.
    pub freeze_after: Option<u64>,
    pub start_time: f64,
    /// Start times of the profit-reporting slots, hours.
    pub slot_starts: Option<Vec<f64>>,
    pub record_trace: bool,
    /// Verify capacity conservation after every event.
    pub check_invariants: bool,
}

impl EpisodeOptions {
    pub fn new(n_requests: u64) -> Self {
        EpisodeOptions {
            n_requests,
            freeze_after: None,
            start_time: 0.0,
            slot_starts: None,
            record_trace: false,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub t: f64,
    pub index: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub average_profit: f64,
    pub requests: u64,
    pub action_counts: [u64; 3],
    pub real_samples: u64,
    pub synthetic_samples: u64,
    pub real_updates: u64,
    /// Average profit of the requests arriving in each slot.
    pub slot_profit: Vec<f64>,
    pub end_time: f64,
    pub trace: Vec<Decision>,
}

/// Runs `options.n_requests` real requests against `agent`.
///
/// Each request's holding time is drawn at arrival whether or not it is
/// accepted, so the arrival sequence and all holding times are a function
/// of `seed` alone.
pub fn run_episode(
    scenario: &Scenario,
    options: &EpisodeOptions,
    agent: &mut dyn Allocator,
    seed: u64,
) -> Result<RunMetrics> {
    let catalog = &*scenario.catalog;
    let types = catalog.len();
    if scenario.arrivals.types() != types || scenario.holding.rates.len() != types {
        return Err(Error::Config("traffic spec does not match catalog size".into()));
    }
    let mut arrival_rngs: Vec<SimRng> = (0..types).map(|i| stream(seed, purpose::ARRIVAL, i as u32)).collect();
    let mut holding_rngs: Vec<SimRng> = (0..types).map(|i| stream(seed, purpose::HOLDING, i as u32)).collect();

    let mut queue = EventQueue::new();
    for (i, rng) in arrival_rngs.iter_mut().enumerate() {
        let t = traffic::next_arrival_time(&scenario.arrivals, i, options.start_time, rng);
        if t.is_finite() {
            queue.push(Event::Arrival { index: i, t });
        }
    }

    agent.begin_episode();
    let stats_before = agent.stats();
    let mut state = State::empty(scenario.capacities, catalog, 0)?;
    let mut ledger = RewardLedger::default();
    let mut slots: Vec<RewardLedger> = Vec::new();
    let mut trace = Vec::new();
    let mut pending = false;
    let mut next_id = 0u64;
    let mut last_t = options.start_time;

    while ledger.request_count < options.n_requests {
        let Some(event) = queue.pop() else {
            break;
        };
        debug_assert!(event.time() >= last_t);
        last_t = event.time();
        match event {
            Event::Departure {
                domain,
                index,
                t_arrival,
                t,
                ..
            } => {
                env::apply_departure_in_place(&mut state, domain, index, catalog)?;
                agent.on_departure(index, t - t_arrival)?;
            }
            Event::Arrival { index, t } => {
                state.set_request(index)?;
                let feasible = env::feasible_actions(&state, catalog);
                if pending {
                    agent.on_transition(&state, feasible)?;
                }
                if options.freeze_after == Some(ledger.request_count) {
                    agent.set_learning(false);
                }
                let holding = traffic::sample_holding(&scenario.holding, index, &mut holding_rngs[index]);
                let action = agent.on_arrival(&state, t, feasible)?;
                if !feasible.contains(action) {
                    return Err(Error::InfeasibleAction {
                        action,
                        type_id: index + 1,
                    });
                }
                let reward = env::immediate_reward(index, action, catalog)?;
                ledger.record(action, reward);
                if let Some(starts) = &options.slot_starts {
                    let slot = starts.partition_point(|&s| s <= t).saturating_sub(1);
                    if slots.len() <= slot {
                        slots.resize(slot + 1, RewardLedger::default());
                    }
                    slots[slot].record(action, reward);
                }
                if options.record_trace {
                    trace.push(Decision { t, index, action });
                }
                env::apply_action_in_place(&mut state, action, catalog)?;
                let domain = match action {
                    Action::Reject => None,
                    Action::Local => Some(Domain::Consumer),
                    Action::Federate => Some(Domain::Provider),
                };
                if let Some(domain) = domain {
                    next_id += 1;
                    queue.push(Event::Departure {
                        id: next_id,
                        domain,
                        index,
                        t_arrival: t,
                        t: t + holding,
                    });
                }
                let next = traffic::next_arrival_time(&scenario.arrivals, index, t, &mut arrival_rngs[index]);
                if next.is_finite() {
                    queue.push(Event::Arrival { index, t: next });
                }
                pending = true;
            }
        }
        if options.check_invariants {
            state.check(scenario.capacities, catalog)?;
        }
    }

    let stats = agent.stats();
    Ok(RunMetrics {
        average_profit: ledger.average_profit(),
        requests: ledger.request_count,
        action_counts: ledger.action_counts,
        real_samples: ledger.request_count,
        synthetic_samples: stats.synthetic_updates - stats_before.synthetic_updates,
        real_updates: stats.real_updates - stats_before.real_updates,
        slot_profit: slots.iter().map(RewardLedger::average_profit).collect(),
        end_time: last_t,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_kind_then_type() {
        let mut q = EventQueue::new();
        let dep = |index, t| Event::Departure {
            id: 0,
            domain: Domain::Consumer,
            index,
            t_arrival: 0.0,
            t,
        };
        q.push(dep(0, 1.0));
        q.push(Event::Arrival { index: 2, t: 1.0 });
        q.push(Event::Arrival { index: 1, t: 1.0 });
        q.push(Event::Arrival { index: 0, t: 2.0 });
        q.push(dep(1, 0.5));
        let order: Vec<Event> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(
            order,
            vec![
                dep(1, 0.5),
                Event::Arrival { index: 1, t: 1.0 },
                Event::Arrival { index: 2, t: 1.0 },
                dep(0, 1.0),
                Event::Arrival { index: 0, t: 2.0 },
            ]
        );
    }
}
