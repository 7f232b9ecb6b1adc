//! Replicated experiments and their CSV reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::agent::{Allocator, FrozenPolicy, PlanningModule, RadarAgent, VariantConfig, VariantName};
use crate::error::{Error, Result};
use crate::rng::replication_seed;
use crate::traffic::{ArrivalProcessSpec, DistributionKind, HoldingProcessSpec, RateSchedule};

use super::config::{ExperimentConfig, SlotBasis, SweepModule};
use super::offline::{train_offline, OfflineParams};
use super::sim::{run_episode, EpisodeOptions, RunMetrics, Scenario};
use super::OFFLINE_VARIANT;

pub const LEARNING_INTERVAL_REQUESTS: u64 = 17_000;
pub const VARIABLE_TRAFFIC_REQUESTS: u64 = 400_000;
pub const DEFAULT_REQUESTS: u64 = 17_000;

/// One simulated setting that every variant is evaluated under.
#[derive(Debug, Clone)]
pub struct Condition {
    pub label: String,
    pub scenario: Scenario,
    pub options: EpisodeOptions,
    /// Conditions sharing a traffic key share one offline policy.
    pub traffic_key: String,
    pub offline_span: f64,
}

/// An algorithm evaluated in a condition.
#[derive(Debug, Clone)]
pub enum Contender {
    Agent { label: String, config: VariantConfig },
    Offline,
}

impl Contender {
    pub fn label(&self) -> &str {
        match self {
            Contender::Agent { label, .. } => label,
            Contender::Offline => OFFLINE_VARIANT,
        }
    }

    fn from_name(cfg: &ExperimentConfig, name: &str) -> Result<Self> {
        if name == OFFLINE_VARIANT {
            Ok(Contender::Offline)
        } else {
            Ok(Contender::Agent {
                label: name.to_string(),
                config: cfg.variant_config(name)?,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub experiment: String,
    pub variant: String,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub experiment: String,
    pub variant: String,
    pub runs: usize,
    pub mean_profit: f64,
    pub std_profit: f64,
    pub mean_requests: f64,
    pub mean_actions: [f64; 3],
    pub mean_real_samples: f64,
    pub mean_synthetic_samples: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

pub const CSV_HEADER: &str =
    "experiment,variant,seed,n_requests,avg_profit,rejects,locals,federates,real_samples,synthetic_samples";

impl Report {
    pub fn aggregate(&self, experiment: &str, variant: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.experiment == experiment && a.variant == variant)
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
        self.aggregates.extend(other.aggregates);
    }

    /// Per-run rows followed by one `seed = mean` row per
    /// `(experiment, variant)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.experiment,
                r.variant,
                r.seed,
                m.requests,
                m.average_profit,
                m.action_counts[0],
                m.action_counts[1],
                m.action_counts[2],
                m.real_samples,
                m.synthetic_samples
            );
        }
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},{},mean,{},{},{},{},{},{},{}",
                a.experiment,
                a.variant,
                a.mean_requests,
                a.mean_profit,
                a.mean_actions[0],
                a.mean_actions[1],
                a.mean_actions[2],
                a.mean_real_samples,
                a.mean_synthetic_samples
            );
        }
        out
    }

    /// Human-readable summary: mean and standard deviation of profit.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{:<40} {:<12} runs={:<3} profit={:.3} sd={:.3}",
                a.experiment, a.variant, a.runs, a.mean_profit, a.std_profit
            );
        }
        out
    }
}

fn aggregate(experiment: &str, variant: &str, runs: &[RunMetrics]) -> Aggregate {
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let mean_profit = mean(&|m| m.average_profit);
    let std_profit = if runs.len() > 1 {
        (runs.iter().map(|m| (m.average_profit - mean_profit).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Aggregate {
        experiment: experiment.to_string(),
        variant: variant.to_string(),
        runs: runs.len(),
        mean_profit,
        std_profit,
        mean_requests: mean(&|m| m.requests as f64),
        mean_actions: [0, 1, 2].map(|k| mean(&|m| m.action_counts[k] as f64)),
        mean_real_samples: mean(&|m| m.real_samples as f64),
        mean_synthetic_samples: mean(&|m| m.synthetic_samples as f64),
    }
}

/// Evaluates every contender in every condition over `cfg.replications`
/// replications. Replication `r` uses seed `cfg.seed ^ r` for all
/// contenders, so they face identical request sequences.
pub fn run_conditions(cfg: &ExperimentConfig, conditions: &[Condition], contenders: &[Contender]) -> Result<Report> {
    let mut offline: HashMap<String, FrozenPolicy> = HashMap::new();
    let mut report = Report::default();
    for cond in conditions {
        for contender in contenders {
            if matches!(contender, Contender::Offline) && !offline.contains_key(&cond.traffic_key) {
                let params = OfflineParams {
                    span: cond.offline_span,
                    ..cfg.offline
                };
                let policy = train_offline(&cond.scenario, &cfg.agent, params, cfg.seed)?;
                offline.insert(cond.traffic_key.clone(), policy);
            }
            let seeds: Vec<u64> = (0..cfg.replications).map(|r| replication_seed(cfg.seed, r)).collect();
            let runs: Vec<RunMetrics> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut agent: Box<dyn Allocator> = match contender {
                        Contender::Agent { config, .. } => Box::new(RadarAgent::new(
                            cond.scenario.catalog.clone(),
                            cond.scenario.capacities,
                            config.clone(),
                            seed,
                        )),
                        Contender::Offline => Box::new(offline[&cond.traffic_key].clone()),
                    };
                    run_episode(&cond.scenario, &cond.options, agent.as_mut(), seed)
                })
                .collect::<Result<_>>()?;
            for (&seed, metrics) in seeds.iter().zip(&runs) {
                report.rows.push(RunRow {
                    experiment: cond.label.clone(),
                    variant: contender.label().to_string(),
                    seed,
                    metrics: metrics.clone(),
                });
            }
            report.aggregates.push(aggregate(&cond.label, contender.label(), &runs));
        }
    }
    Ok(report)
}

fn contenders(cfg: &ExperimentConfig) -> Result<Vec<Contender>> {
    cfg.variants.iter().map(|n| Contender::from_name(cfg, n)).collect()
}

fn freeze_point(n_requests: u64, fraction: f64) -> Option<u64> {
    (fraction < 1.0).then(|| (fraction * n_requests as f64).round() as u64)
}

impl ExperimentConfig {
    pub fn requests_or(&self, default: u64) -> u64 {
        self.n_requests.unwrap_or(default)
    }

    /// Stationary scenario at the catalog's nominal rates.
    pub fn scenario(&self, kind: DistributionKind) -> Scenario {
        Scenario {
            catalog: self.catalog.clone(),
            capacities: self.capacities,
            arrivals: ArrivalProcessSpec::nominal(&self.catalog, kind),
            holding: HoldingProcessSpec::nominal(&self.catalog, kind, self.normal_ht_uses_mu),
        }
    }

    /// Scenario whose first `n_variable` types follow their variable
    /// schedules over slots sized for `n_requests` expected requests.
    /// Returns the scenario, the slot start times and the horizon.
    pub fn variable_scenario(&self, n_variable: usize, n_requests: u64) -> Result<(Scenario, Vec<f64>, f64)> {
        let types = self.catalog.len();
        let slots = self
            .variable_rates
            .iter()
            .take(n_variable)
            .map(Vec::len)
            .max()
            .unwrap_or(5)
            .max(1);
        let rate = |i: usize, k: usize| -> f64 {
            if i < n_variable {
                let r = &self.variable_rates[i];
                r[k.min(r.len() - 1)]
            } else {
                self.catalog.get(i).map(|t| t.arrival_rate).unwrap_or(0.0)
            }
        };
        let totals: Vec<f64> = (0..slots).map(|k| (0..types).map(|i| rate(i, k)).sum()).collect();
        if totals.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("a traffic slot has no arrivals at all".into()));
        }
        let n = n_requests as f64;
        let lengths: Vec<f64> = match self.slot_basis {
            SlotBasis::Time => vec![n / totals.iter().sum::<f64>(); slots],
            SlotBasis::Requests => totals.iter().map(|r| n / slots as f64 / r).collect(),
        };
        let starts: Vec<f64> = lengths
            .iter()
            .scan(0.0, |acc, len| {
                let s = *acc;
                *acc += len;
                Some(s)
            })
            .collect();
        let horizon: f64 = lengths.iter().sum();
        let mut scenario = self.scenario(DistributionKind::Poisson);
        for i in 0..n_variable {
            let pairs = starts.iter().enumerate().map(|(k, &s)| (s, rate(i, k))).collect();
            scenario.arrivals.schedules[i] = RateSchedule::new(pairs)?;
        }
        Ok((scenario, starts, horizon))
    }
}

/// All configured variants in the stationary setting of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.requests_or(DEFAULT_REQUESTS);
    let mut options = EpisodeOptions::new(n);
    options.freeze_after = freeze_point(n, cfg.learning_fraction);
    let cond = Condition {
        label: format!("run/{}", cfg.kind),
        scenario: cfg.scenario(cfg.kind),
        options,
        traffic_key: cfg.kind.to_string(),
        offline_span: 0.0,
    };
    run_conditions(cfg, &[cond], &contenders(cfg)?)
}

/// Sweeps `(theta, kappa)` of one planning module with the others off.
pub fn experiment_theta_kappa(cfg: &ExperimentConfig) -> Result<Report> {
    let n = cfg.requests_or(DEFAULT_REQUESTS);
    let cond = Condition {
        label: String::new(),
        scenario: cfg.scenario(cfg.kind),
        options: EpisodeOptions::new(n),
        traffic_key: cfg.kind.to_string(),
        offline_span: 0.0,
    };
    let module = cfg.sweep_module;
    let mut report = Report::default();
    for &theta in &cfg.thetas {
        for &kappa in &cfg.kappas {
            let mut config = cfg.variant_config(VariantName::Mfrl.name())?;
            let on = PlanningModule::on(theta, kappa);
            match module {
                SweepModule::Background => config.background = on,
                SweepModule::DecisionExplore => config.decision_explore = on,
                SweepModule::DecisionExploit => config.decision_exploit = on,
            }
            let cond = Condition {
                label: format!("theta-kappa/{}/theta={theta}/kappa={kappa}", module.name()),
                ..cond.clone()
            };
            let contender = Contender::Agent {
                label: module.name().to_string(),
                config,
            };
            report.extend(run_conditions(cfg, &[cond], &[contender])?);
        }
    }
    Ok(report)
}

/// Learning (values, processes, exploration) stops after the first
/// `f * n_requests` requests; profit is measured over the whole run.
pub fn experiment_learning_interval(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<Report> {
    let n = cfg.requests_or(LEARNING_INTERVAL_REQUESTS);
    let scenario = cfg.scenario(cfg.kind);
    let agents: Vec<Contender> = contenders(cfg)?
        .into_iter()
        .filter(|c| !matches!(c, Contender::Offline))
        .collect();
    let mut conditions = Vec::new();
    for &f in fractions {
        let mut options = EpisodeOptions::new(n);
        options.freeze_after = freeze_point(n, f);
        conditions.push(Condition {
            label: format!("learning-interval/f={f}"),
            scenario: scenario.clone(),
            options,
            traffic_key: cfg.kind.to_string(),
            offline_span: 0.0,
        });
    }
    let mut report = run_conditions(cfg, &conditions, &agents)?;
    if cfg.variants.iter().any(|v| v == OFFLINE_VARIANT) {
        // the offline policy never learns online, so one evaluation covers every fraction
        let cond = Condition {
            label: "learning-interval/offline".into(),
            scenario,
            options: EpisodeOptions::new(n),
            traffic_key: cfg.kind.to_string(),
            offline_span: 0.0,
        };
        report.extend(run_conditions(cfg, &[cond], &[Contender::Offline])?);
    }
    Ok(report)
}

/// The first `n` service types follow the variable schedules.
pub fn experiment_variable_traffic(cfg: &ExperimentConfig, n_variable: &[usize]) -> Result<Report> {
    let n_req = cfg.requests_or(VARIABLE_TRAFFIC_REQUESTS);
    let mut conditions = Vec::new();
    for &n in n_variable {
        let (scenario, starts, horizon) = cfg.variable_scenario(n, n_req)?;
        let mut options = EpisodeOptions::new(n_req);
        options.slot_starts = Some(starts);
        conditions.push(Condition {
            label: format!("variable-traffic/n={n}"),
            scenario,
            options,
            traffic_key: format!("variable/{n}"),
            offline_span: horizon,
        });
    }
    run_conditions(cfg, &conditions, &contenders(cfg)?)
}

/// True inter-arrival and holding times follow `kind`; the learner keeps
/// assuming exponential shapes.
pub fn experiment_distribution(cfg: &ExperimentConfig, kinds: &[DistributionKind]) -> Result<Report> {
    let n = cfg.requests_or(DEFAULT_REQUESTS);
    let conditions: Vec<Condition> = kinds
        .iter()
        .map(|&kind| Condition {
            label: format!("distribution/{kind}"),
            scenario: cfg.scenario(kind),
            options: EpisodeOptions::new(n),
            traffic_key: kind.to_string(),
            offline_span: 0.0,
        })
        .collect();
    run_conditions(cfg, &conditions, &contenders(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_requests: Some(300),
            replications: 3,
            variants: vec!["mfrl".into(), "mb-full".into()],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_replication_aggregate_equals_run() {
        let cfg = ExperimentConfig {
            replications: 1,
            ..small()
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            let agg = report.aggregate(&row.experiment, &row.variant).unwrap();
            assert_eq!(agg.mean_profit, row.metrics.average_profit);
            assert_eq!(agg.std_profit, 0.0);
        }
    }

    #[test]
    fn csv_has_run_and_mean_rows() {
        let report = run_experiment(&small()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 6 + 2);
        assert!(lines[7].starts_with("run/poisson,mfrl,mean,300,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn variable_slots_by_time_and_requests() {
        let mut cfg = small();
        let (scenario, starts, horizon) = cfg.variable_scenario(3, 12_200).unwrap();
        assert_eq!(starts.len(), 5);
        assert!((horizon - 1000.0).abs() < 1e-9);
        assert!((starts[1] - 200.0).abs() < 1e-9);
        assert_eq!(scenario.arrivals.schedules[2].rate_at(450.0), 0.0);
        assert_eq!(scenario.arrivals.schedules[0].rate_at(450.0), 10.0);

        cfg.slot_basis = SlotBasis::Requests;
        let (_, starts, _) = cfg.variable_scenario(3, 13_000).unwrap();
        // slot totals 13, 11, 13, 11, 13 req/h with 2600 requests each
        assert!((starts[1] - 200.0).abs() < 1e-9);
        assert!((starts[2] - (200.0 + 2600.0 / 11.0)).abs() < 1e-9);

        let (stationary, _, _) = cfg.variable_scenario(0, 1700).unwrap();
        assert_eq!(stationary.arrivals, cfg.scenario(DistributionKind::Poisson).arrivals);
    }

    #[test]
    fn freeze_points() {
        assert_eq!(freeze_point(100, 1.0), None);
        assert_eq!(freeze_point(100, 0.0), Some(0));
        assert_eq!(freeze_point(17_000, 0.3), Some(5_100));
    }
}
