//! Request generation from the true arrival/holding processes, and the
//! exponential-moving-average learner that feeds the sample model.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DistributionKind {
    #[default]
    Poisson,
    Uniform,
    Normal,
}

impl DistributionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Poisson => "poisson",
            DistributionKind::Uniform => "uniform",
            DistributionKind::Normal => "normal",
        }
    }

    /// One duration for a process with nominal rate `rate` (> 0).
    ///
    /// * poisson: exponential with mean `1/rate`
    /// * uniform: uniform on `[0, 2/rate]`
    /// * normal: `max(0, N(10/rate, (5/rate)^2))`
    pub fn sample<R: Rng + ?Sized>(self, rate: f64, rng: &mut R) -> f64 {
        match self {
            DistributionKind::Poisson => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            DistributionKind::Uniform => rng.random::<f64>() * (2.0 / rate),
            DistributionKind::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                (10.0 / rate + z * (5.0 / rate)).max(0.0)
            }
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" | "exponential" => Ok(DistributionKind::Poisson),
            "uniform" => Ok(DistributionKind::Uniform),
            "normal" => Ok(DistributionKind::Normal),
            other => Err(Error::Config(format!("unknown distribution kind `{other}`"))),
        }
    }
}

/// Piecewise-constant rate: `(slot start, rate)` pairs, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    slots: Vec<(f64, f64)>,
}

impl RateSchedule {
    pub fn new(slots: Vec<(f64, f64)>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Config("rate schedule is empty".into()));
        }
        if slots[0].0 != 0.0 {
            return Err(Error::Config("rate schedule must start at time 0".into()));
        }
        for w in slots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config("slot start times must be strictly increasing".into()));
            }
        }
        if slots.iter().any(|&(t, r)| !t.is_finite() || !r.is_finite() || r < 0.0) {
            return Err(Error::Config("rates must be finite and non-negative".into()));
        }
        Ok(RateSchedule { slots })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        RateSchedule::new(vec![(0.0, rate)])
    }

    /// `rates.len()` equal slots of length `slot_len` each.
    pub fn equal_slots(rates: &[f64], slot_len: f64) -> Result<Self> {
        RateSchedule::new(rates.iter().enumerate().map(|(k, &r)| (k as f64 * slot_len, r)).collect())
    }

    pub fn slots(&self) -> &[(f64, f64)] {
        &self.slots
    }

    fn slot_index(&self, t: f64) -> usize {
        self.slots.partition_point(|&(start, _)| start <= t).saturating_sub(1)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.slots[self.slot_index(t)].1
    }

    /// Start of the slot after the one containing `t`, if any.
    pub fn next_boundary(&self, t: f64) -> Option<f64> {
        self.slots.get(self.slot_index(t) + 1).map(|&(start, _)| start)
    }

    /// Time-average rate over `[0, horizon]`, the last slot extending to the horizon.
    pub fn mean_rate(&self, horizon: f64) -> f64 {
        let mut total = 0.0;
        for (k, &(start, rate)) in self.slots.iter().enumerate() {
            if start >= horizon {
                break;
            }
            let end = self.slots.get(k + 1).map_or(horizon, |s| s.0.min(horizon));
            total += rate * (end - start);
        }
        total / horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcessSpec {
    pub kinds: Vec<DistributionKind>,
    pub schedules: Vec<RateSchedule>,
}

impl ArrivalProcessSpec {
    /// Stationary arrivals at the catalog's nominal rates.
    pub fn nominal(catalog: &Catalog, kind: DistributionKind) -> Self {
        ArrivalProcessSpec {
            kinds: vec![kind; catalog.len()],
            schedules: catalog
                .iter()
                .map(|t| RateSchedule::constant(t.arrival_rate).expect("catalog rates are valid"))
                .collect(),
        }
    }

    pub fn types(&self) -> usize {
        self.schedules.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldingProcessSpec {
    pub kinds: Vec<DistributionKind>,
    /// Departure rates `mu`.
    pub rates: Vec<f64>,
    /// Rates that parameterize the normal kind. The normal holding time is
    /// written in terms of the arrival rate, so by default these are the
    /// nominal arrival rates.
    pub normal_rates: Vec<f64>,
}

impl HoldingProcessSpec {
    pub fn nominal(catalog: &Catalog, kind: DistributionKind, normal_uses_mu: bool) -> Self {
        HoldingProcessSpec {
            kinds: vec![kind; catalog.len()],
            rates: catalog.iter().map(|t| t.departure_rate).collect(),
            normal_rates: catalog
                .iter()
                .map(|t| if normal_uses_mu { t.departure_rate } else { t.arrival_rate })
                .collect(),
        }
    }
}

/// One inter-arrival draw using the rate in effect at `t_now`.
/// Returns `f64::INFINITY` when that rate is zero.
pub fn sample_interarrival<R: Rng + ?Sized>(
    spec: &ArrivalProcessSpec,
    index: usize,
    t_now: f64,
    rng: &mut R,
) -> f64 {
    let rate = spec.schedules[index].rate_at(t_now);
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    spec.kinds[index].sample(rate, rng)
}

/// Absolute time of the next arrival of type `index` after `t_now`.
///
/// A draw that crosses a slot boundary is discarded and redrawn from the
/// boundary with the next slot's rate; zero-rate slots are skipped.
pub fn next_arrival_time<R: Rng + ?Sized>(
    spec: &ArrivalProcessSpec,
    index: usize,
    t_now: f64,
    rng: &mut R,
) -> f64 {
    let schedule = &spec.schedules[index];
    let mut t = t_now;
    loop {
        let boundary = schedule.next_boundary(t);
        let gap = sample_interarrival(spec, index, t, rng);
        let candidate = t + gap;
        match boundary {
            Some(b) if candidate >= b => t = b,
            _ => return candidate,
        }
    }
}

pub fn sample_holding<R: Rng + ?Sized>(spec: &HoldingProcessSpec, index: usize, rng: &mut R) -> f64 {
    let kind = spec.kinds[index];
    let rate = match kind {
        DistributionKind::Normal => spec.normal_rates[index],
        _ => spec.rates[index],
    };
    kind.sample(rate, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaEstimator {
    mean: f64,
    eta: f64,
    count: u64,
}

impl EmaEstimator {
    pub fn new(eta: f64) -> Self {
        assert!(eta > 0.0 && eta <= 1.0, "smoothing factor must lie in (0, 1]");
        EmaEstimator {
            mean: 0.0,
            eta,
            count: 0,
        }
    }

    pub fn with_mean(eta: f64, mean: f64, count: u64) -> Self {
        EmaEstimator { mean, ..EmaEstimator::new(eta) }.with_count(count)
    }

    fn with_count(mut self, count: u64) -> Self {
        self.count = count;
        self
    }

    /// First observation initializes the mean; later ones blend with `eta`.
    pub fn update(&mut self, x: f64) {
        debug_assert!(x >= 0.0);
        self.mean = if self.count == 0 {
            x
        } else {
            (1.0 - self.eta) * self.mean + self.eta * x
        };
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mean_or(&self, prior: f64) -> f64 {
        if self.count == 0 {
            prior
        } else {
            self.mean
        }
    }
}

/// Online estimates of per-type mean inter-arrival and holding times.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessLearner {
    arrivals: Vec<EmaEstimator>,
    departures: Vec<EmaEstimator>,
    last_arrival: Vec<Option<f64>>,
    prior_mean: f64,
}

impl ProcessLearner {
    pub fn new(types: usize, eta: f64, prior_mean: f64) -> Self {
        ProcessLearner {
            arrivals: vec![EmaEstimator::new(eta); types],
            departures: vec![EmaEstimator::new(eta); types],
            last_arrival: vec![None; types],
            prior_mean,
        }
    }

    pub fn types(&self) -> usize {
        self.arrivals.len()
    }

    pub fn observe_arrival(&mut self, index: usize, t: f64) -> Result<()> {
        let slot = self.last_arrival.get_mut(index).ok_or(Error::TypeOutOfRange(index + 1))?;
        if let Some(last) = *slot {
            if !(t >= last) {
                return Err(Error::NonMonotoneArrival {
                    type_id: index + 1,
                    t,
                    last,
                });
            }
            self.arrivals[index].update(t - last);
        }
        *slot = Some(t);
        Ok(())
    }

    pub fn observe_departure(&mut self, index: usize, holding: f64) -> Result<()> {
        if !(holding >= 0.0) {
            return Err(Error::NegativeHolding(holding));
        }
        self.departures
            .get_mut(index)
            .ok_or(Error::TypeOutOfRange(index + 1))?
            .update(holding);
        Ok(())
    }

    /// Forgets the last-arrival timestamps (estimates are kept), for a new
    /// episode whose clock restarts.
    pub fn reset_timestamps(&mut self) {
        self.last_arrival.iter_mut().for_each(|t| *t = None);
    }

    pub fn arrival_estimator(&self, index: usize) -> &EmaEstimator {
        &self.arrivals[index]
    }

    pub fn departure_estimator(&self, index: usize) -> &EmaEstimator {
        &self.departures[index]
    }

    /// Current mean inter-arrival estimate, or the prior if unobserved.
    pub fn interarrival_mean(&self, index: usize) -> f64 {
        self.arrivals[index].mean_or(self.prior_mean)
    }

    pub fn holding_mean(&self, index: usize) -> f64 {
        self.departures[index].mean_or(self.prior_mean)
    }

    /// Exponential draw with the learned mean inter-arrival time.
    pub fn learned_interarrival<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e * self.interarrival_mean(index)
    }

    /// Exponential draw with the learned mean holding time.
    pub fn learned_holding<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e * self.holding_mean(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn spec(kind: DistributionKind, rate: f64) -> ArrivalProcessSpec {
        ArrivalProcessSpec {
            kinds: vec![kind],
            schedules: vec![RateSchedule::constant(rate).unwrap()],
        }
    }

    #[test]
    fn poisson_interarrival_mean() {
        let s = spec(DistributionKind::Poisson, 10.0);
        let mut rng = stream(1, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_interarrival(&s, 0, 0.0, &mut rng)).collect();
        assert!((mean(&xs) - 0.1).abs() < 0.001, "{}", mean(&xs));
    }

    #[test]
    fn uniform_interarrival_support_and_mean() {
        let s = spec(DistributionKind::Uniform, 5.0);
        let mut rng = stream(2, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_interarrival(&s, 0, 0.0, &mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.0..=0.4).contains(&x)));
        assert!((mean(&xs) - 0.2).abs() < 0.002);
    }

    #[test]
    fn zero_rate_slot_is_infinite() {
        let s = spec(DistributionKind::Poisson, 0.0);
        let mut rng = stream(3, 0, 0);
        assert_eq!(sample_interarrival(&s, 0, 0.0, &mut rng), f64::INFINITY);
        assert_eq!(next_arrival_time(&s, 0, 0.0, &mut rng), f64::INFINITY);
    }

    #[test]
    fn holding_samples() {
        let cat = Catalog::reference();
        let poisson = HoldingProcessSpec::nominal(&cat, DistributionKind::Poisson, false);
        let mut rng = stream(4, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_holding(&poisson, 0, &mut rng)).collect();
        assert!((mean(&xs) - 2.5).abs() < 0.025, "{}", mean(&xs));

        let uniform = HoldingProcessSpec::nominal(&cat, DistributionKind::Uniform, false);
        assert!((0..10_000).all(|_| (0.0..=40.0).contains(&sample_holding(&uniform, 1, &mut rng))));

        let normal = HoldingProcessSpec::nominal(&cat, DistributionKind::Normal, false);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_holding(&normal, 2, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        assert!(xs.contains(&0.0));
    }

    #[test]
    fn normal_uses_arrival_rate_unless_switched() {
        let cat = Catalog::reference();
        let verbatim = HoldingProcessSpec::nominal(&cat, DistributionKind::Normal, false);
        let switched = HoldingProcessSpec::nominal(&cat, DistributionKind::Normal, true);
        let mut rng = stream(5, 0, 0);
        let a: Vec<f64> = (0..50_000).map(|_| sample_holding(&verbatim, 0, &mut rng)).collect();
        let b: Vec<f64> = (0..50_000).map(|_| sample_holding(&switched, 0, &mut rng)).collect();
        // 10/10 h versus 10/0.4 h
        assert!((mean(&a) - 1.0).abs() < 0.02);
        assert!((mean(&b) - 25.0).abs() < 0.5);
    }

    #[test]
    fn piecewise_schedule_skips_zero_slots() {
        let s = ArrivalProcessSpec {
            kinds: vec![DistributionKind::Poisson],
            schedules: vec![RateSchedule::equal_slots(&[4.0, 0.0, 4.0], 10.0).unwrap()],
        };
        let mut rng = stream(6, 0, 0);
        let mut t = 0.0;
        let mut n = 0;
        while t < 30.0 {
            t = next_arrival_time(&s, 0, t, &mut rng);
            assert!(!(10.0..20.0).contains(&t), "arrival at {t} inside zero-rate slot");
            n += 1;
        }
        assert!(n > 40);
    }

    #[test]
    fn schedule_lookup() {
        let s = RateSchedule::equal_slots(&[6.0, 8.0, 10.0, 8.0, 6.0], 2.0).unwrap();
        assert_eq!(s.rate_at(0.0), 6.0);
        assert_eq!(s.rate_at(1.999), 6.0);
        assert_eq!(s.rate_at(2.0), 8.0);
        assert_eq!(s.rate_at(100.0), 6.0);
        assert_eq!(s.next_boundary(3.0), Some(4.0));
        assert_eq!(s.next_boundary(9.0), None);
        assert!((s.mean_rate(10.0) - 7.6).abs() < 1e-12);
        assert!(RateSchedule::new(vec![(1.0, 1.0)]).is_err());
        assert!(RateSchedule::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(RateSchedule::new(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn ema_formula() {
        let mut e = EmaEstimator::with_mean(0.1, 2.0, 5);
        e.update(3.0);
        assert!((e.mean() - 2.1).abs() < 1e-12);

        let mut e = EmaEstimator::new(0.1);
        e.update(4.0);
        assert_eq!(e.mean(), 4.0);
        e.update(4.0);
        assert_eq!(e.mean(), 4.0);
        assert_eq!(e.count(), 2);
    }

    #[test]
    fn observe_arrivals() {
        let mut l = ProcessLearner::new(3, 0.1, 1.0);
        l.observe_arrival(0, 0.0).unwrap();
        assert_eq!(l.arrival_estimator(0).count(), 0);
        assert_eq!(l.interarrival_mean(0), 1.0);
        l.observe_arrival(0, 0.2).unwrap();
        assert_eq!(l.arrival_estimator(0).mean(), 0.2);
        l.observe_arrival(0, 0.2).unwrap();
        assert!((l.arrival_estimator(0).mean() - 0.9 * 0.2).abs() < 1e-15);
        assert!(matches!(l.observe_arrival(0, 0.1), Err(Error::NonMonotoneArrival { .. })));
    }

    #[test]
    fn observe_departures() {
        let mut l = ProcessLearner::new(3, 0.1, 1.0);
        l.observe_departure(1, 20.0).unwrap();
        assert_eq!(l.departure_estimator(1).mean(), 20.0);
        l.observe_departure(1, 10.0).unwrap();
        assert!((l.departure_estimator(1).mean() - 19.0).abs() < 1e-12);
        assert_eq!(l.observe_departure(1, -1.0), Err(Error::NegativeHolding(-1.0)));
    }

    #[test]
    fn learned_sampling() {
        let mut l = ProcessLearner::new(2, 1.0, 0.7);
        l.observe_arrival(0, 0.0).unwrap();
        l.observe_arrival(0, 0.1).unwrap();
        l.observe_departure(0, 2.5).unwrap();
        let mut rng = stream(7, 0, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| l.learned_interarrival(0, &mut rng)).collect();
        assert!((mean(&xs) - 0.1).abs() < 0.001);
        assert!((0..10_000).all(|_| l.learned_holding(0, &mut rng) > 0.0));
        let prior: Vec<f64> = (0..100_000).map(|_| l.learned_interarrival(1, &mut rng)).collect();
        assert!((mean(&prior) - 0.7).abs() < 0.01);
    }
}
