//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! [catalog]
//! path = services.csv
//!
//! [capacities]
//! consumer = 100
//! provider = 50
//!
//! [traffic]
//! kind = poisson
//!
//! [agent]
//! variant = mb-full
//! alpha = 0.1
//!
//! [experiment]
//! n_requests = 17000
//! replications = 20
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::agent::{
    PlanningOverrides, VariantConfig, VariantName, BACKGROUND_DEFAULT, DECISION_EXPLOIT_DEFAULT, DECISION_EXPLORE_DEFAULT,
};
use crate::catalog::Catalog;
use crate::env::DomainCapacities;
use crate::error::{Error, Result};
use crate::planner::TrajectoryParams;
use crate::traffic::DistributionKind;

use super::offline::OfflineParams;

/// How the variable-traffic horizon is cut into slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlotBasis {
    /// Equal lengths of simulated time.
    #[default]
    Time,
    /// Lengths chosen so each slot expects the same number of requests.
    Requests,
}

impl FromStr for SlotBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "time" => Ok(SlotBasis::Time),
            "requests" => Ok(SlotBasis::Requests),
            other => Err(Error::Config(format!("unknown slot basis `{other}`"))),
        }
    }
}

/// Planning module swept by the theta/kappa experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepModule {
    #[default]
    Background,
    DecisionExplore,
    DecisionExploit,
}

impl SweepModule {
    pub fn name(self) -> &'static str {
        match self {
            SweepModule::Background => "bg",
            SweepModule::DecisionExplore => "dt-explore",
            SweepModule::DecisionExploit => "dt-exploit",
        }
    }
}

impl FromStr for SweepModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "bg" | "background" => Ok(SweepModule::Background),
            "dt-explore" => Ok(SweepModule::DecisionExplore),
            "dt-exploit" => Ok(SweepModule::DecisionExploit),
            other => Err(Error::Config(format!("unknown planning module `{other}`"))),
        }
    }
}

/// Per-slot rates of the variable service types.
pub const VARIABLE_RATES: [[f64; 5]; 3] = [
    [6.0, 8.0, 10.0, 8.0, 6.0],
    [3.0, 1.0, 3.0, 1.0, 3.0],
    [4.0, 2.0, 0.0, 2.0, 4.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub catalog: Arc<Catalog>,
    pub catalog_path: Option<PathBuf>,
    pub capacities: DomainCapacities,

    pub kind: DistributionKind,
    pub normal_ht_uses_mu: bool,
    pub slot_basis: SlotBasis,
    pub variable_rates: Vec<Vec<f64>>,

    /// Variant used by single runs.
    pub variant: String,
    /// Learning settings shared by all variants.
    pub agent: VariantConfig,
    pub overrides: PlanningOverrides,

    /// Requests per episode; experiments pick their own default when unset.
    pub n_requests: Option<u64>,
    pub replications: u64,
    pub seed: u64,
    pub learning_fraction: f64,
    pub offline: OfflineParams,

    pub variants: Vec<String>,
    pub fractions: Vec<f64>,
    pub sweep_module: SweepModule,
    pub thetas: Vec<u32>,
    pub kappas: Vec<u32>,
    pub n_variable: Vec<usize>,
    pub kinds: Vec<DistributionKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            catalog: Arc::new(Catalog::reference()),
            catalog_path: None,
            capacities: DomainCapacities::default(),
            kind: DistributionKind::Poisson,
            normal_ht_uses_mu: false,
            slot_basis: SlotBasis::Time,
            variable_rates: VARIABLE_RATES.iter().map(|r| r.to_vec()).collect(),
            variant: VariantName::MbFull.name().into(),
            agent: VariantConfig::default(),
            overrides: PlanningOverrides::default(),
            n_requests: None,
            replications: 20,
            seed: 1,
            learning_fraction: 1.0,
            offline: OfflineParams::default(),
            variants: ["mfrl", "mb-bgex", "mb-dtp", "mb-full", "rl-offline"].map(String::from).to_vec(),
            fractions: (0..=10).map(|k| f64::from(k) / 10.0).collect(),
            sweep_module: SweepModule::Background,
            thetas: vec![0, 1, 2, 5, 10],
            kappas: vec![1, 2, 3, 5],
            n_variable: vec![0, 1, 2, 3],
            kinds: vec![DistributionKind::Poisson, DistributionKind::Uniform, DistributionKind::Normal],
        }
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|_| format!("invalid list element `{v}`")))
        .collect()
}

fn scalar<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("invalid value `{value}`"))
}

fn boolean(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid boolean `{value}`")),
    }
}

fn real(value: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number `{value}`"))
}

fn set_theta(slot: &mut Option<TrajectoryParams>, default: TrajectoryParams, theta: Option<u32>, kappa: Option<u32>) {
    let current = slot.unwrap_or(default);
    *slot = Some(TrajectoryParams::new(
        theta.unwrap_or(current.theta),
        kappa.unwrap_or(current.kappa),
    ));
}

impl ExperimentConfig {
    /// Parses configuration text on top of the defaults. A catalog path is
    /// recorded but not loaded.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(line_no, "unterminated section header"))?
                    .trim();
                if !["catalog", "capacities", "traffic", "agent", "experiment"].contains(&name) {
                    return Err(Error::parse(line_no, format!("unknown section `{name}`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let section = section
                .as_deref()
                .ok_or_else(|| Error::parse(line_no, "key outside of a section"))?;
            cfg.set(section, key, value).map_err(|m| Error::parse(line_no, m))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one `section.key`.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        let o = &mut self.overrides;
        match (section, key) {
            ("catalog", "path") => self.catalog_path = Some(PathBuf::from(value)),
            ("capacities", "consumer") => self.capacities.consumer = scalar(value)?,
            ("capacities", "provider") => self.capacities.provider = scalar(value)?,

            ("traffic", "kind") => self.kind = value.parse().map_err(|e: Error| e.to_string())?,
            ("traffic", "normal_ht_uses_mu") => self.normal_ht_uses_mu = boolean(value)?,
            ("traffic", "slot_basis") => self.slot_basis = value.parse().map_err(|e: Error| e.to_string())?,
            ("traffic", k) if k.starts_with("variable.") => {
                let id: usize = scalar(&k["variable.".len()..])?;
                if id == 0 {
                    return Err("variable schedule ids start at 1".into());
                }
                let rates = list::<f64>(value)?;
                if rates.is_empty() || rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return Err("variable rates must be non-negative".into());
                }
                if self.variable_rates.len() < id {
                    self.variable_rates.resize(id, Vec::new());
                }
                self.variable_rates[id - 1] = rates;
            }

            ("agent", "variant") => {
                value.parse::<VariantName>().map_err(|e| e.to_string())?;
                self.variant = value.to_string();
            }
            ("agent", "rule") => self.agent.rule = value.parse().map_err(|e: Error| e.to_string())?,
            ("agent", "alpha") => self.agent.hyper.alpha = real(value)?,
            ("agent", "beta") => self.agent.hyper.beta = real(value)?,
            ("agent", "gamma") => self.agent.hyper.gamma = real(value)?,
            ("agent", "rho_greedy_only") => self.agent.hyper.rho_greedy_only = boolean(value)?,
            ("agent", "epsilon0") => self.agent.exploration.epsilon0 = real(value)?,
            ("agent", "epsilon_min") => self.agent.exploration.epsilon_min = real(value)?,
            ("agent", "epsilon_decay") => self.agent.exploration.decay = real(value)?,
            ("agent", "ema_eta") => self.agent.ema_eta = real(value)?,
            ("agent", "prior_mean") => self.agent.prior_mean = real(value)?,
            ("agent", "bg_theta") => set_theta(&mut o.background, BACKGROUND_DEFAULT, Some(scalar(value)?), None),
            ("agent", "bg_kappa") => set_theta(&mut o.background, BACKGROUND_DEFAULT, None, Some(scalar(value)?)),
            ("agent", "dt_explore_theta") => set_theta(&mut o.decision_explore, DECISION_EXPLORE_DEFAULT, Some(scalar(value)?), None),
            ("agent", "dt_explore_kappa") => set_theta(&mut o.decision_explore, DECISION_EXPLORE_DEFAULT, None, Some(scalar(value)?)),
            ("agent", "dt_exploit_theta") => set_theta(&mut o.decision_exploit, DECISION_EXPLOIT_DEFAULT, Some(scalar(value)?), None),
            ("agent", "dt_exploit_kappa") => set_theta(&mut o.decision_exploit, DECISION_EXPLOIT_DEFAULT, None, Some(scalar(value)?)),

            ("experiment", "n_requests") => self.n_requests = Some(scalar(value)?),
            ("experiment", "replications") => self.replications = scalar(value)?,
            ("experiment", "seed") => self.seed = scalar(value)?,
            ("experiment", "learning_fraction") => self.learning_fraction = real(value)?,
            ("experiment", "offline_theta") => self.offline.theta = scalar(value)?,
            ("experiment", "offline_kappa") => self.offline.kappa = scalar(value)?,
            ("experiment", "variants") => {
                let names = list::<String>(value)?;
                for name in &names {
                    if name != super::OFFLINE_VARIANT {
                        name.parse::<VariantName>().map_err(|e| e.to_string())?;
                    }
                }
                self.variants = names;
            }
            ("experiment", "fractions") => self.fractions = list(value)?,
            ("experiment", "module") => self.sweep_module = value.parse().map_err(|e: Error| e.to_string())?,
            ("experiment", "thetas") => self.thetas = list(value)?,
            ("experiment", "kappas") => self.kappas = list(value)?,
            ("experiment", "n_variable") => self.n_variable = list(value)?,
            ("experiment", "kinds") => self.kinds = list(value)?,
            _ => return Err(format!("unknown key `{key}` in section `{section}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.capacities.consumer == 0 {
            return Err(Error::Config("consumer capacity must be positive".into()));
        }
        if self.n_requests == Some(0) {
            return Err(Error::Config("n_requests must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.learning_fraction) || self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("learning fractions must lie in [0, 1]".into()));
        }
        if self.n_variable.iter().any(|&n| n > self.catalog.len().min(self.variable_rates.len())) {
            return Err(Error::Config("n_variable exceeds the number of variable schedules".into()));
        }
        for name in self.variants.iter().chain([&self.variant]) {
            if name != super::OFFLINE_VARIANT {
                name.parse::<VariantName>()?;
            }
        }
        if self.variable_rates.iter().take(self.catalog.len()).any(Vec::is_empty) {
            return Err(Error::Config("missing variable schedule".into()));
        }
        Ok(())
    }

    /// Reads a configuration file and loads its catalog, resolving a
    /// relative catalog path against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        let mut cfg = ExperimentConfig::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        if let Some(rel) = cfg.catalog_path.clone() {
            let resolved = match path.parent() {
                Some(dir) if rel.is_relative() => dir.join(rel),
                _ => rel,
            };
            cfg.catalog = Arc::new(Catalog::load(&resolved)?);
            cfg.catalog_path = Some(resolved);
            cfg.validate()?;
        }
        Ok(cfg)
    }

    /// Full agent configuration of a named variant under these settings.
    pub fn variant_config(&self, name: &str) -> Result<VariantConfig> {
        let flags = VariantConfig::from_name(name.parse()?);
        let mut cfg = VariantConfig {
            background: flags.background,
            decision_explore: flags.decision_explore,
            decision_exploit: flags.decision_exploit,
            ..self.agent.clone()
        };
        cfg.learning_enabled = true;
        cfg.apply(&self.overrides);
        Ok(cfg)
    }
}
