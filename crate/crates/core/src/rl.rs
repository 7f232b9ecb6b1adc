//! Tabular action values, the Q-Learning and R-Learning TD rules, greedy
//! evaluation and the epsilon-greedy behavior policy.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::env::{Action, ActionSet, StateKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum UpdateRule {
    QLearning,
    #[default]
    RLearning,
}

impl UpdateRule {
    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::QLearning => "q-learning",
            UpdateRule::RLearning => "r-learning",
        }
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "q-learning" | "q" => Ok(UpdateRule::QLearning),
            "r-learning" | "r" => Ok(UpdateRule::RLearning),
            other => Err(Error::Config(format!("unknown update rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    /// Action-value learning rate.
    pub alpha: f64,
    /// Average-reward learning rate.
    pub beta: f64,
    /// Discount, Q-Learning only.
    pub gamma: f64,
    /// Update `rho` only when the updated action was greedy.
    pub rho_greedy_only: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha: 0.1,
            beta: 0.01,
            gamma: 0.95,
            rho_greedy_only: true,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config("alpha and beta must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationPolicy {
    pub epsilon0: f64,
    pub epsilon_min: f64,
    /// Multiplicative decay per real decision.
    pub decay: f64,
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        ExplorationPolicy {
            epsilon0: 1.0,
            epsilon_min: 0.02,
            decay: 0.999,
        }
    }
}

impl ExplorationPolicy {
    pub fn greedy() -> Self {
        ExplorationPolicy {
            epsilon0: 0.0,
            epsilon_min: 0.0,
            decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.epsilon_min
            && self.epsilon_min <= self.epsilon0
            && self.epsilon0 <= 1.0
            && self.decay > 0.0
            && self.decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("exploration requires 0 <= eps_min <= eps0 <= 1 and decay in (0, 1]".into()))
        }
    }

    /// `max(eps_min, eps0 * decay^n)`.
    pub fn epsilon(&self, n: u64) -> f64 {
        let n = i32::try_from(n).unwrap_or(i32::MAX);
        (self.epsilon0 * self.decay.powi(n)).max(self.epsilon_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Row {
    q: [f64; 3],
    stored: u8,
}

/// Sparse `(state, action) -> value` store plus the average reward `rho`.
/// Absent entries read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    rows: FxHashMap<StateKey, Row>,
    rho: f64,
    params: Hyperparameters,
    updates: u64,
}

impl ValueTable {
    pub fn new(params: Hyperparameters) -> Self {
        ValueTable {
            rows: FxHashMap::default(),
            rho: 0.0,
            params,
            updates: 0,
        }
    }

    pub fn params(&self) -> &Hyperparameters {
        &self.params
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn set_rho(&mut self, rho: f64) {
        self.rho = rho;
    }

    /// Number of `td_update` calls applied so far.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// Number of stored `(state, action)` entries.
    pub fn len(&self) -> usize {
        self.rows.values().map(|r| r.stored.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    pub fn q_value(&self, key: &StateKey, a: Action) -> f64 {
        self.rows.get(key).map_or(0.0, |r| r.q[a.index()])
    }

    pub fn set(&mut self, key: &StateKey, a: Action, value: f64) {
        let row = self.row_mut(key);
        row.q[a.index()] = value;
        row.stored |= 1 << a.index();
    }

    fn row_mut(&mut self, key: &StateKey) -> &mut Row {
        if !self.rows.contains_key(key) {
            self.rows.insert(key.clone(), Row::default());
        }
        self.rows.get_mut(key).expect("row just inserted")
    }

    /// Highest-value feasible action; ties go to the lowest ordinal.
    pub fn best_action(&self, key: &StateKey, feasible: ActionSet) -> Result<(Action, f64)> {
        let q = self.rows.get(key).map_or([0.0; 3], |r| r.q);
        best_of(&q, feasible).ok_or(Error::EmptyActionSet)
    }

    /// `max_{a in feasible} Q[key, a]`, or 0 for an empty set.
    pub fn max_value(&self, key: &StateKey, feasible: ActionSet) -> f64 {
        self.best_action(key, feasible).map_or(0.0, |(_, v)| v)
    }

    /// Applies one TD update for the transition `(s, a, r, s')`.
    ///
    /// `feasible` is the action set of `s` (used by the average-reward
    /// update) and `next_feasible` that of `s'`. For R-Learning the value
    /// update runs first and the `rho` update then reads the updated
    /// `max_a Q[s, a]`; `max_a' Q[s', a']` is read once, before either.
    #[allow(clippy::too_many_arguments)]
    pub fn td_update(
        &mut self,
        rule: UpdateRule,
        key: &StateKey,
        feasible: ActionSet,
        a: Action,
        reward: f64,
        next_key: &StateKey,
        next_feasible: ActionSet,
    ) {
        self.updates += 1;
        let Hyperparameters {
            alpha,
            beta,
            gamma,
            rho_greedy_only,
        } = self.params;
        let next_max = self.max_value(next_key, next_feasible);
        let current = self.q_value(key, a);
        match rule {
            UpdateRule::QLearning => {
                if alpha != 0.0 {
                    let updated = (1.0 - alpha) * current + alpha * (reward + gamma * next_max);
                    self.set(key, a, updated);
                }
            }
            UpdateRule::RLearning => {
                let was_greedy = !rho_greedy_only || current == self.max_value(key, feasible.with(a));
                if alpha != 0.0 {
                    let updated = (1.0 - alpha) * current + alpha * (reward - self.rho + next_max);
                    self.set(key, a, updated);
                }
                if beta != 0.0 && was_greedy {
                    let state_max = self.max_value(key, feasible.with(a));
                    self.rho = (1.0 - beta) * self.rho + beta * (reward - state_max + next_max);
                }
            }
        }
    }

    /// Text dump: one `l_c;l_p;d;action;value` line per stored entry in key
    /// order, followed by a `rho;value` line.
    pub fn dump(&self) -> String {
        let mut keys: Vec<&StateKey> = self.rows.keys().collect();
        keys.sort();
        let join = |xs: &[u16]| xs.iter().map(u16::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for key in keys {
            let row = &self.rows[key];
            for a in Action::ALL {
                if row.stored & (1 << a.index()) != 0 {
                    let _ = writeln!(
                        out,
                        "{};{};{};{};{}",
                        join(key.alive_consumer()),
                        join(key.alive_provider()),
                        key.request_id(),
                        a,
                        row.q[a.index()]
                    );
                }
            }
        }
        let _ = writeln!(out, "rho;{}", self.rho);
        out
    }

    pub fn parse_dump(text: &str, params: Hyperparameters) -> Result<Self> {
        let mut table = ValueTable::new(params);
        let mut types: Option<usize> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(';').collect();
            let real = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("invalid value `{s}`")))
            };
            if fields[0].trim() == "rho" {
                if fields.len() != 2 {
                    return Err(Error::parse(line_no, "expected `rho;value`"));
                }
                table.rho = real(fields[1])?;
                continue;
            }
            if fields.len() != 5 {
                return Err(Error::parse(line_no, format!("expected 5 fields, found {}", fields.len())));
            }
            let counts = |s: &str| -> Result<Vec<u16>> {
                s.split(',')
                    .map(|c| c.trim().parse::<u16>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(line_no, format!("invalid counts `{s}`")))
            };
            let lc = counts(fields[0])?;
            let lp = counts(fields[1])?;
            if lc.len() != lp.len() || *types.get_or_insert(lc.len()) != lc.len() {
                return Err(Error::parse(line_no, "inconsistent number of service types"));
            }
            let d: u16 = fields[2]
                .trim()
                .parse()
                .ok()
                .filter(|&d| d >= 1 && usize::from(d) <= lc.len())
                .ok_or_else(|| Error::parse(line_no, format!("invalid request id `{}`", fields[2])))?;
            let a = Action::from_name(fields[3].trim())
                .ok_or_else(|| Error::parse(line_no, format!("unknown action `{}`", fields[3])))?;
            let v = real(fields[4])?;
            table.set(&StateKey::new(&lc, &lp, d), a, v);
        }
        Ok(table)
    }
}

fn best_of(q: &[f64; 3], feasible: ActionSet) -> Option<(Action, f64)> {
    let mut best: Option<(Action, f64)> = None;
    for a in feasible.iter() {
        let v = q[a.index()];
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((a, v));
        }
    }
    best
}

impl ActionSet {
    pub fn with(mut self, a: Action) -> ActionSet {
        self.insert(a);
        self
    }
}

/// Epsilon-greedy choice: with probability `epsilon(n)` a uniformly random
/// feasible action, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    table: &ValueTable,
    key: &StateKey,
    feasible: ActionSet,
    policy: &ExplorationPolicy,
    n: u64,
    rng: &mut R,
) -> Result<Action> {
    if feasible.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let eps = policy.epsilon(n);
    if eps > 0.0 && rng.random::<f64>() < eps {
        let k = rng.random_range(0..feasible.len());
        return Ok(feasible.nth(k).expect("index within set"));
    }
    Ok(table.best_action(key, feasible)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn key(d: u16) -> StateKey {
        StateKey::new(&[0, 0, 0], &[0, 0, 0], d)
    }

    fn params(alpha: f64, beta: f64, gamma: f64) -> Hyperparameters {
        Hyperparameters {
            alpha,
            beta,
            gamma,
            rho_greedy_only: false,
        }
    }

    #[test]
    fn absent_entries_read_zero() {
        let mut t = ValueTable::new(Hyperparameters::default());
        assert_eq!(t.q_value(&key(1), Action::Local), 0.0);
        t.set(&key(1), Action::Local, 5.5);
        assert_eq!(t.q_value(&key(1), Action::Local), 5.5);
        assert_eq!(t.q_value(&key(1), Action::Federate), 0.0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn best_action_cases() {
        let mut t = ValueTable::new(Hyperparameters::default());
        let k = key(1);
        t.set(&k, Action::Local, 70.0);
        t.set(&k, Action::Federate, 40.0);
        assert_eq!(t.best_action(&k, ActionSet::ALL).unwrap(), (Action::Local, 70.0));
        assert_eq!(t.best_action(&key(2), ActionSet::ALL).unwrap(), (Action::Reject, 0.0));

        let mut t = ValueTable::new(Hyperparameters::default());
        t.set(&k, Action::Local, 99.0);
        t.set(&k, Action::Federate, 1.0);
        let feasible: ActionSet = [Action::Reject, Action::Federate].into_iter().collect();
        assert_eq!(t.best_action(&k, feasible).unwrap(), (Action::Federate, 1.0));
        assert_eq!(t.best_action(&k, ActionSet::EMPTY), Err(Error::EmptyActionSet));
    }

    #[test]
    fn q_learning_update() {
        let mut t = ValueTable::new(params(0.5, 0.1, 0.9));
        t.set(&key(2), Action::Local, 10.0);
        t.td_update(UpdateRule::QLearning, &key(1), ActionSet::ALL, Action::Local, 100.0, &key(2), ActionSet::ALL);
        assert_eq!(t.q_value(&key(1), Action::Local), 54.5);
        assert_eq!(t.rho(), 0.0);
    }

    #[test]
    fn r_learning_update_order() {
        let mut t = ValueTable::new(params(0.5, 0.1, 0.9));
        t.set(&key(2), Action::Local, 10.0);
        t.td_update(UpdateRule::RLearning, &key(1), ActionSet::ALL, Action::Local, 70.0, &key(2), ActionSet::ALL);
        assert_eq!(t.q_value(&key(1), Action::Local), 40.0);
        assert!((t.rho() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rates_are_noops() {
        for rule in [UpdateRule::QLearning, UpdateRule::RLearning] {
            let mut t = ValueTable::new(params(0.0, 0.0, 0.9));
            t.set(&key(1), Action::Local, 3.0);
            t.set_rho(2.0);
            let before = t.clone();
            t.td_update(rule, &key(1), ActionSet::ALL, Action::Local, 70.0, &key(2), ActionSet::ALL);
            t.td_update(rule, &key(3), ActionSet::ALL, Action::Federate, 70.0, &key(2), ActionSet::ALL);
            assert_eq!(t.rows, before.rows);
            assert_eq!(t.rho(), before.rho());
        }
    }

    #[test]
    fn rho_greedy_only_skips_exploratory_updates() {
        let mut p = params(0.5, 0.1, 0.9);
        p.rho_greedy_only = true;
        let mut t = ValueTable::new(p);
        t.set(&key(1), Action::Local, 50.0);
        t.td_update(UpdateRule::RLearning, &key(1), ActionSet::ALL, Action::Reject, 0.0, &key(2), ActionSet::ALL);
        assert_eq!(t.rho(), 0.0);
        t.td_update(UpdateRule::RLearning, &key(1), ActionSet::ALL, Action::Local, 100.0, &key(2), ActionSet::ALL);
        assert!(t.rho() != 0.0);
    }

    #[test]
    fn epsilon_schedule() {
        let p = ExplorationPolicy {
            epsilon0: 1.0,
            epsilon_min: 0.01,
            decay: 0.5,
        };
        assert_eq!(p.epsilon(0), 1.0);
        assert_eq!(p.epsilon(10), 0.01);
        assert_eq!(p.epsilon(3), 0.125);
        assert!(p.validate().is_ok());
        assert!(ExplorationPolicy { epsilon0: 0.1, epsilon_min: 0.2, decay: 1.0 }.validate().is_err());
    }

    #[test]
    fn greedy_policy_never_explores() {
        let mut t = ValueTable::new(Hyperparameters::default());
        t.set(&key(1), Action::Federate, 1.0);
        let mut rng = stream(1, 0, 0);
        for n in 0..1000 {
            let a = select_action(&t, &key(1), ActionSet::ALL, &ExplorationPolicy::greedy(), n, &mut rng).unwrap();
            assert_eq!(a, Action::Federate);
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let t = ValueTable::new(Hyperparameters::default());
        let policy = ExplorationPolicy {
            epsilon0: 1.0,
            epsilon_min: 0.0,
            decay: 1.0,
        };
        let mut rng = stream(2, 0, 0);
        let mut counts = [0u32; 3];
        let draws = 100_000;
        for n in 0..draws {
            let a = select_action(&t, &key(1), ActionSet::ALL, &policy, n, &mut rng).unwrap();
            counts[a.index()] += 1;
        }
        for c in counts {
            let freq = f64::from(c) / draws as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn dump_round_trip() {
        let mut t = ValueTable::new(Hyperparameters::default());
        t.set(&StateKey::new(&[1, 0, 0], &[0, 0, 1], 2), Action::Local, 5.5);
        t.set(&StateKey::new(&[1, 0, 0], &[0, 0, 1], 2), Action::Reject, -0.1);
        t.set(&key(3), Action::Federate, 1.0 / 3.0);
        t.set_rho(4.25);
        let text = t.dump();
        assert!(text.contains("1,0,0;0,0,1;2;LOCAL;5.5\n"));
        assert!(text.ends_with("rho;4.25\n"));
        let back = ValueTable::parse_dump(&text, Hyperparameters::default()).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.rho(), t.rho());
    }

    #[test]
    fn dump_parse_errors() {
        let p = Hyperparameters::default();
        assert!(matches!(ValueTable::parse_dump("1,0;0,0;1;LOCAL", p), Err(Error::Parse { line: 1, .. })));
        assert!(ValueTable::parse_dump("1,0;0,0;3;LOCAL;1", p).is_err());
        assert!(ValueTable::parse_dump("1,0;0,0;1;KEEP;1", p).is_err());
        assert!(ValueTable::parse_dump("1,0;0;1;LOCAL;1", p).is_err());
        assert!(ValueTable::parse_dump("rho;x", p).is_err());
        assert!(ValueTable::parse_dump("1,0;0,0;1;LOCAL;1\n1;0;1;LOCAL;1", p).is_err());
    }
}
