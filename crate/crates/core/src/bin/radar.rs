use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use radar::harness::{
    experiment_distribution, experiment_learning_interval, experiment_theta_kappa, experiment_variable_traffic,
    run_episode, train_offline, EpisodeOptions, ExperimentConfig, Report, RunMetrics, RunRow,
};
use radar::RadarAgent;

#[derive(Parser, Debug)]
#[command(name = "radar", version, about = "Federated resource allocation with model-based average-reward learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (key = value, with sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Algorithm variant (mfrl, mb-bgex, mb-dtp, mb-full, rl-offline).
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replications: Option<u64>,
    /// Requests per episode.
    #[arg(long, global = true)]
    requests: Option<u64>,
    /// CSV output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the learned value table here.
    #[arg(long, global = true)]
    dump_table: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one episode of a single variant.
    Run,
    /// Run a replicated experiment.
    Experiment { name: ExperimentName },
    /// Train the offline reference policy.
    OfflineTrain,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExperimentName {
    ThetaKappa,
    LearningInterval,
    VariableTraffic,
    Distribution,
}

impl Cli {
    fn load_config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.variant {
            cfg.variant = v.clone();
            cfg.variants = vec![v.clone()];
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if let Some(n) = self.requests {
            cfg.n_requests = Some(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_single(cli: &Cli, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let n = cfg.requests_or(radar::harness::experiment::DEFAULT_REQUESTS);
    let scenario = cfg.scenario(cfg.kind);
    let mut options = EpisodeOptions::new(n);
    if cfg.learning_fraction < 1.0 {
        options.freeze_after = Some((cfg.learning_fraction * n as f64).round() as u64);
    }
    let (metrics, table): (RunMetrics, String) = if cfg.variant == radar::harness::OFFLINE_VARIANT {
        let mut policy = train_offline(&scenario, &cfg.agent, cfg.offline, cfg.seed)?;
        let m = run_episode(&scenario, &options, &mut policy, cfg.seed)?;
        (m, policy.table().dump())
    } else {
        let config = cfg.variant_config(&cfg.variant)?;
        let mut agent = RadarAgent::new(Arc::clone(&scenario.catalog), scenario.capacities, config, cfg.seed);
        let m = run_episode(&scenario, &options, &mut agent, cfg.seed)?;
        (m, agent.table().dump())
    };
    if let Some(path) = &cli.dump_table {
        std::fs::write(path, table).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "{}: average profit {:.4} over {} requests (reject/local/federate = {}/{}/{})",
        cfg.variant,
        metrics.average_profit,
        metrics.requests,
        metrics.action_counts[0],
        metrics.action_counts[1],
        metrics.action_counts[2]
    );
    let report = Report {
        rows: vec![RunRow {
            experiment: format!("run/{}", cfg.kind),
            variant: cfg.variant.clone(),
            seed: cfg.seed,
            metrics,
        }],
        aggregates: Vec::new(),
    };
    write_output(cli.out.as_deref(), &report.to_csv())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Run => run_single(&cli, &cfg)?,
        Command::Experiment { name } => {
            let report = match name {
                ExperimentName::ThetaKappa => experiment_theta_kappa(&cfg)?,
                ExperimentName::LearningInterval => experiment_learning_interval(&cfg, &cfg.fractions)?,
                ExperimentName::VariableTraffic => experiment_variable_traffic(&cfg, &cfg.n_variable)?,
                ExperimentName::Distribution => experiment_distribution(&cfg, &cfg.kinds)?,
            };
            eprint!("{}", report.summary());
            write_output(cli.out.as_deref(), &report.to_csv())?;
        }
        Command::OfflineTrain => {
            let policy = train_offline(&cfg.scenario(cfg.kind), &cfg.agent, cfg.offline, cfg.seed)?;
            let Some(path) = cli.dump_table.as_deref().or(cli.out.as_deref()) else {
                bail!("offline-train needs --dump-table PATH");
            };
            std::fs::write(path, policy.table().dump()).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("trained {} table entries", policy.table().len());
        }
    }
    Ok(())
}
