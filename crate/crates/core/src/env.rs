//! The multi-domain service federation problem: state, feasible actions,
//! known immediate rewards and capacity bookkeeping.

use std::fmt;

use smallvec::SmallVec;

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Per-type alive-instance counts.
pub type Counts = SmallVec<[u32; 4]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Reject = 0,
    Local = 1,
    Federate = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Reject, Action::Local, Action::Federate];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Reject => "REJECT",
            Action::Local => "LOCAL",
            Action::Federate => "FEDERATE",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered set of actions, iterated by ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const ALL: ActionSet = ActionSet(0b111);

    pub fn single(a: Action) -> Self {
        ActionSet(1 << a.index())
    }

    pub fn insert(&mut self, a: Action) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// The `n`-th member in ordinal order.
    pub fn nth(self, n: usize) -> Option<Action> {
        self.iter().nth(n)
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<T: IntoIterator<Item = Action>>(iter: T) -> Self {
        let mut set = ActionSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Consumer,
    Provider,
}

/// Total capacities of the consumer and provider domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainCapacities {
    pub consumer: u32,
    pub provider: u32,
}

impl DomainCapacities {
    pub fn new(consumer: u32, provider: u32) -> Self {
        DomainCapacities { consumer, provider }
    }
}

impl Default for DomainCapacities {
    fn default() -> Self {
        DomainCapacities::new(100, 50)
    }
}

/// `s = (c_c, c_p, l_c, l_p, d)`. The request `d` is stored as the 0-based
/// index of its single nonzero entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub free_consumer: u32,
    pub free_provider: u32,
    pub alive_consumer: Counts,
    pub alive_provider: Counts,
    request: usize,
}

impl State {
    /// Empty network with a request of type index `request`.
    pub fn empty(caps: DomainCapacities, catalog: &Catalog, request: usize) -> Result<Self> {
        catalog.get(request)?;
        let zeros: Counts = std::iter::repeat_n(0, catalog.len()).collect();
        Ok(State {
            free_consumer: caps.consumer,
            free_provider: caps.provider,
            alive_consumer: zeros.clone(),
            alive_provider: zeros,
            request,
        })
    }

    /// Builds a state from alive counts, deriving the free capacities.
    pub fn from_counts(
        caps: DomainCapacities,
        catalog: &Catalog,
        alive_consumer: &[u32],
        alive_provider: &[u32],
        request: usize,
    ) -> Result<Self> {
        if alive_consumer.len() != catalog.len() || alive_provider.len() != catalog.len() {
            return Err(Error::InvalidState("count vector length differs from catalog size".into()));
        }
        catalog.get(request)?;
        let used = |counts: &[u32]| -> u64 {
            counts.iter().zip(catalog.demands()).map(|(&l, w)| u64::from(l) * u64::from(w)).sum()
        };
        let free = |cap: u32, used: u64| -> Result<u32> {
            u64::from(cap)
                .checked_sub(used)
                .map(|v| v as u32)
                .ok_or_else(|| Error::InvalidState(format!("usage {used} exceeds capacity {cap}")))
        };
        Ok(State {
            free_consumer: free(caps.consumer, used(alive_consumer))?,
            free_provider: free(caps.provider, used(alive_provider))?,
            alive_consumer: alive_consumer.iter().copied().collect(),
            alive_provider: alive_provider.iter().copied().collect(),
            request,
        })
    }

    /// 0-based index of the current request's type.
    pub fn request(&self) -> usize {
        self.request
    }

    pub fn request_one_hot(&self) -> Vec<u8> {
        (0..self.alive_consumer.len()).map(|i| u8::from(i == self.request)).collect()
    }

    pub fn with_request(&self, request: usize) -> Result<State> {
        let mut s = self.clone();
        s.set_request(request)?;
        Ok(s)
    }

    pub fn set_request(&mut self, request: usize) -> Result<()> {
        if request >= self.alive_consumer.len() {
            return Err(Error::TypeOutOfRange(request + 1));
        }
        self.request = request;
        Ok(())
    }

    pub fn alive(&self, domain: Domain) -> &Counts {
        match domain {
            Domain::Consumer => &self.alive_consumer,
            Domain::Provider => &self.alive_provider,
        }
    }

    pub fn total_alive(&self) -> u64 {
        self.alive_consumer.iter().chain(&self.alive_provider).map(|&c| u64::from(c)).sum()
    }

    /// Checks `c + Σ w·l = C` in both domains and the one-hot request.
    pub fn check(&self, caps: DomainCapacities, catalog: &Catalog) -> Result<()> {
        if self.alive_consumer.len() != catalog.len() || self.alive_provider.len() != catalog.len() {
            return Err(Error::InvalidState("count vector length differs from catalog size".into()));
        }
        if self.request >= catalog.len() {
            return Err(Error::InvalidState("request type out of range".into()));
        }
        for (domain, free, counts, cap) in [
            ("consumer", self.free_consumer, &self.alive_consumer, caps.consumer),
            ("provider", self.free_provider, &self.alive_provider, caps.provider),
        ] {
            let used: u64 = counts
                .iter()
                .zip(catalog.demands())
                .map(|(&l, w)| u64::from(l) * u64::from(w))
                .sum();
            if u64::from(free) + used != u64::from(cap) {
                return Err(Error::InvalidState(format!(
                    "{domain} capacity not conserved: free {free} + used {used} != {cap}"
                )));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> StateKey {
        let mut key: SmallVec<[u16; 8]> = SmallVec::with_capacity(2 * self.alive_consumer.len() + 1);
        key.extend(self.alive_consumer.iter().map(|&c| c as u16));
        key.extend(self.alive_provider.iter().map(|&c| c as u16));
        key.push(self.request as u16 + 1);
        StateKey(key)
    }
}

/// Canonical table key `(l_c, l_p, d)` with `d` as the 1-based type id.
/// Free capacities are omitted since they follow from the counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub SmallVec<[u16; 8]>);

impl StateKey {
    pub fn new(alive_consumer: &[u16], alive_provider: &[u16], request_id: u16) -> Self {
        let mut key = SmallVec::new();
        key.extend_from_slice(alive_consumer);
        key.extend_from_slice(alive_provider);
        key.push(request_id);
        StateKey(key)
    }

    pub fn types(&self) -> usize {
        (self.0.len() - 1) / 2
    }

    pub fn alive_consumer(&self) -> &[u16] {
        &self.0[..self.types()]
    }

    pub fn alive_provider(&self) -> &[u16] {
        let n = self.types();
        &self.0[n..2 * n]
    }

    pub fn request_id(&self) -> u16 {
        self.0[self.0.len() - 1]
    }
}

pub fn feasible_actions(s: &State, catalog: &Catalog) -> ActionSet {
    let w = catalog.get(s.request).map(|t| t.demand).unwrap_or(u32::MAX);
    let mut set = ActionSet::single(Action::Reject);
    if s.free_consumer >= w {
        set.insert(Action::Local);
    }
    if s.free_provider >= w {
        set.insert(Action::Federate);
    }
    set
}

/// Known reward of taking `action` for a request of 0-based type `index`.
pub fn immediate_reward(index: usize, action: Action, catalog: &Catalog) -> Result<f64> {
    let t = catalog.get(index)?;
    Ok(match action {
        Action::Reject => 0.0,
        Action::Local => t.revenue,
        Action::Federate => t.revenue - t.federation_cost,
    })
}

/// Applies the allocation of the current request. `d` is left as is.
pub fn apply_action(s: &State, action: Action, catalog: &Catalog) -> Result<State> {
    let mut next = s.clone();
    apply_action_in_place(&mut next, action, catalog)?;
    Ok(next)
}

pub fn apply_action_in_place(s: &mut State, action: Action, catalog: &Catalog) -> Result<()> {
    let i = s.request;
    let w = catalog.get(i)?.demand;
    let infeasible = || Error::InfeasibleAction {
        action,
        type_id: i + 1,
    };
    match action {
        Action::Reject => {}
        Action::Local => {
            s.free_consumer = s.free_consumer.checked_sub(w).ok_or_else(infeasible)?;
            s.alive_consumer[i] += 1;
        }
        Action::Federate => {
            s.free_provider = s.free_provider.checked_sub(w).ok_or_else(infeasible)?;
            s.alive_provider[i] += 1;
        }
    }
    Ok(())
}

/// Releases one alive instance of 0-based type `index` from `domain`.
pub fn apply_departure(s: &State, domain: Domain, index: usize, catalog: &Catalog) -> Result<State> {
    let mut next = s.clone();
    apply_departure_in_place(&mut next, domain, index, catalog)?;
    Ok(next)
}

pub fn apply_departure_in_place(s: &mut State, domain: Domain, index: usize, catalog: &Catalog) -> Result<()> {
    release_in_place(s, domain, index, 1, catalog)
}

pub(crate) fn release_in_place(
    s: &mut State,
    domain: Domain,
    index: usize,
    count: u32,
    catalog: &Catalog,
) -> Result<()> {
    let w = catalog.get(index)?.demand;
    let (free, alive) = match domain {
        Domain::Consumer => (&mut s.free_consumer, &mut s.alive_consumer),
        Domain::Provider => (&mut s.free_provider, &mut s.alive_provider),
    };
    if alive[index] < count {
        return Err(Error::NotAlive {
            domain,
            type_id: index + 1,
        });
    }
    alive[index] -= count;
    *free += w * count;
    Ok(())
}

/// Running tally of the average-profit metric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardLedger {
    pub total_reward: f64,
    pub request_count: u64,
    pub action_counts: [u64; 3],
}

impl RewardLedger {
    pub fn record(&mut self, action: Action, reward: f64) {
        self.total_reward += reward;
        self.request_count += 1;
        self.action_counts[action.index()] += 1;
    }

    /// Average profit, or 0 when nothing has been recorded.
    pub fn average_profit(&self) -> f64 {
        if self.request_count == 0 {
            0.0
        } else {
            self.total_reward / self.request_count as f64
        }
    }

    pub fn count(&self, action: Action) -> u64 {
        self.action_counts[action.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> Catalog {
        Catalog::reference()
    }

    fn caps() -> DomainCapacities {
        DomainCapacities::new(100, 50)
    }

    fn state(free_c: u32, free_p: u32, request: usize) -> State {
        let c = cat();
        let mut s = State::empty(DomainCapacities::new(free_c, free_p), &c, 0).unwrap();
        s.set_request(request).unwrap();
        s
    }

    #[test]
    fn feasible_sets() {
        let c = cat();
        assert_eq!(feasible_actions(&state(1, 0, 0), &c), ActionSet::single(Action::Reject));
        let all: Vec<_> = feasible_actions(&state(100, 50, 1), &c).iter().collect();
        assert_eq!(all, vec![Action::Reject, Action::Local, Action::Federate]);
        for i in 0..3 {
            assert_eq!(feasible_actions(&state(0, 0, i), &c), ActionSet::single(Action::Reject));
        }
    }

    #[test]
    fn rewards() {
        let c = cat();
        assert_eq!(immediate_reward(0, Action::Local, &c).unwrap(), 100.0);
        assert_eq!(immediate_reward(0, Action::Reject, &c).unwrap(), 0.0);
        assert_eq!(immediate_reward(2, Action::Federate, &c).unwrap(), 5.0);
        assert_eq!(immediate_reward(3, Action::Local, &c), Err(Error::TypeOutOfRange(4)));
    }

    #[test]
    fn local_and_federate_allocation() {
        let c = cat();
        let s = state(10, 50, 0);
        let n = apply_action(&s, Action::Local, &c).unwrap();
        assert_eq!(n.free_consumer, 8);
        assert_eq!(n.alive_consumer[0], 1);

        let s = state(100, 50, 1);
        let n = apply_action(&s, Action::Federate, &c).unwrap();
        assert_eq!(n.free_provider, 49);
        assert_eq!(n.alive_provider[1], 1);

        let n = apply_action(&s, Action::Reject, &c).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn infeasible_allocation_is_an_error() {
        let c = cat();
        let s = state(1, 0, 0);
        assert!(matches!(
            apply_action(&s, Action::Local, &c),
            Err(Error::InfeasibleAction { .. })
        ));
        assert!(apply_action(&s, Action::Federate, &c).is_err());
    }

    #[test]
    fn departures() {
        let c = cat();
        let s = State::from_counts(DomainCapacities::new(10, 50), &c, &[2, 0, 0], &[0, 0, 0], 0).unwrap();
        assert_eq!(s.free_consumer, 6);
        let n = apply_departure(&s, Domain::Consumer, 0, &c).unwrap();
        assert_eq!((n.alive_consumer[0], n.free_consumer), (1, 8));

        let s = State::from_counts(caps(), &c, &[0, 0, 0], &[0, 1, 0], 0).unwrap();
        assert_eq!(s.free_provider, 49);
        let n = apply_departure(&s, Domain::Provider, 1, &c).unwrap();
        assert_eq!((n.alive_provider[1], n.free_provider), (0, 50));

        assert_eq!(
            apply_departure(&s, Domain::Consumer, 2, &c),
            Err(Error::NotAlive {
                domain: Domain::Consumer,
                type_id: 3
            })
        );
    }

    #[test]
    fn request_one_hot() {
        let c = cat();
        let s = State::empty(caps(), &c, 0).unwrap();
        assert_eq!(s.with_request(1).unwrap().request_one_hot(), vec![0, 1, 0]);
        let s = s.with_request(0).unwrap().with_request(2).unwrap();
        assert_eq!(s.request_one_hot(), vec![0, 0, 1]);
        assert_eq!(s.with_request(4), Err(Error::TypeOutOfRange(5)));
    }

    #[test]
    fn ledger() {
        let mut l = RewardLedger::default();
        assert_eq!((l.average_profit(), l.request_count), (0.0, 0));
        l.record(Action::Local, 100.0);
        l.record(Action::Reject, 0.0);
        l.record(Action::Federate, 70.0);
        assert!((l.average_profit() - 170.0 / 3.0).abs() < 1e-12);
        assert_eq!(l.action_counts, [1, 1, 1]);

        let mut l = RewardLedger::default();
        l.record(Action::Reject, 0.0);
        assert_eq!(l.average_profit(), 0.0);
    }

    #[test]
    fn keys() {
        let c = cat();
        let s = State::empty(caps(), &c, 0).unwrap();
        assert_eq!(s.key(), StateKey::new(&[0, 0, 0], &[0, 0, 0], 1));
        let s = State::from_counts(caps(), &c, &[1, 0, 0], &[0, 0, 1], 1).unwrap();
        assert_eq!(s.key(), StateKey::new(&[1, 0, 0], &[0, 0, 1], 2));
        assert_ne!(s.key(), s.with_request(2).unwrap().key());
        assert_eq!(s.key().alive_provider(), &[0, 0, 1]);
        assert_eq!(s.key().request_id(), 2);
    }

    #[test]
    fn invalid_counts_rejected() {
        let c = cat();
        assert!(State::from_counts(DomainCapacities::new(1, 0), &c, &[1, 0, 0], &[0, 0, 0], 0).is_err());
    }
}
