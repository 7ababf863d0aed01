use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vwaplab::estimators::ImpactStats;
use vwaplab::lab::{
    compare, evaluate_policy, load_checkpoint, load_config, resolve_environment, run_experiment, write_heatmap,
    write_policy_table, AgentKind, ExperimentConfig, PolicyView,
};
use vwaplab::rng::Domain;
use vwaplab::trainers::Agent;
use vwaplab::{ClosedForm, Environment, Exec, RunSeed, Twap};

#[derive(Parser)]
#[command(name = "vwaplab", version, about = "VWAP-targeting optimal execution lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `env1`, `env2` or a path to an environment TOML file.
    #[arg(long)]
    env: Option<String>,
    /// adp | adp-explore | ml-ac | mo-ac | twap | closed-form
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out one episode and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trained agent checkpoint (for learned algorithms).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train over the configured seeds and write curves, checkpoints and results.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Out-of-sample statistics of one policy against TWAP.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Estimate the impact parameters b and k from simulated episodes.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Compare TWAP, the closed-form policies and any checkpoints.
    Compare {
        #[command(flatten)]
        common: Common,
        /// `name=path` pairs of trained checkpoints.
        #[arg(long = "agent", value_name = "NAME=PATH")]
        agents: Vec<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Dump policy mean/std on a (t, mu, q) grid, plus a density heatmap.
    PolicyTable {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

impl Common {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn environment(&self) -> Result<Environment> {
        if let Some(env) = &self.env {
            return Ok(resolve_environment(env)?);
        }
        if let Some(path) = &self.config {
            return Ok(load_config(path)?.environment);
        }
        Ok(Environment::env1())
    }

    fn agent_kind(&self, default: AgentKind) -> Result<AgentKind> {
        match &self.algo {
            Some(a) => Ok(a.parse()?),
            None => match &self.config {
                Some(path) => Ok(load_config(path)?.agent),
                None => Ok(default),
            },
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::new(self.agent_kind(AgentKind::ClosedForm)?, self.environment()?),
        };
        if self.config.is_some() {
            if let Some(env) = &self.env {
                config.environment = resolve_environment(env)?;
            }
            if let Some(algo) = &self.algo {
                let kind: AgentKind = algo.parse()?;
                if kind != config.agent {
                    let mut fresh = ExperimentConfig::new(kind, config.environment);
                    fresh.run = config.run.clone();
                    config = fresh;
                }
            }
        }
        if let Some(seed) = self.seed {
            config.run.seeds = vec![seed];
        }
        if let Some(epochs) = self.epochs {
            config.train.epochs = epochs;
        }
        if let Some(out) = &self.out {
            config.run.out = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

/// A policy chosen on the command line.
enum Chosen {
    Twap(Twap),
    ClosedForm(vwaplab::ClosedFormPolicy),
    Trained(Box<Agent>),
}

impl Chosen {
    fn view(&self) -> &dyn PolicyView {
        match self {
            Chosen::Twap(p) => p,
            Chosen::ClosedForm(p) => p,
            Chosen::Trained(a) => a.as_ref(),
        }
    }
}

fn choose(common: &Common, env: &Environment, checkpoint: Option<&Path>) -> Result<Chosen> {
    if let Some(path) = checkpoint {
        let agent = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        if let Some(a) = &common.algo {
            if a != agent.algorithm.name() {
                bail!("checkpoint holds a `{}` agent, not `{a}`", agent.algorithm);
            }
        }
        return Ok(Chosen::Trained(Box::new(agent)));
    }
    match common.agent_kind(AgentKind::ClosedForm)? {
        AgentKind::Twap => Ok(Chosen::Twap(Twap::new(env))),
        AgentKind::ClosedForm => Ok(Chosen::ClosedForm(ClosedForm::new(env)?.policy(true))),
        AgentKind::Trained(a) => bail!("`{a}` needs --checkpoint (train one with `vwaplab train`)"),
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, checkpoint } => {
            let env = common.environment()?;
            let chosen = choose(&common, &env, checkpoint.as_deref())?;
            let traj = env.rollout(chosen.view(), &mut RunSeed(common.seed()).episode(Domain::Evaluation, 0))?;
            traj.write_csv(env.step(), output(common.out.as_ref())?)?;
            eprintln!("total return {:.6}, effective cash {:.6}", traj.total_return(), traj.effective_cash());
            Ok(true)
        }
        Command::Train { common } => {
            let config = common.experiment()?;
            let summary = run_experiment(&config, common.exec())?;
            print_json(&serde_json::to_value(&summary)?)?;
            for e in &summary.errors {
                eprintln!("seed {} failed: {}", e.seed, e.error);
            }
            Ok(summary.ok())
        }
        Command::Evaluate { common, checkpoint, episodes } => {
            let env = common.environment()?;
            let chosen = choose(&common, &env, checkpoint.as_deref())?;
            let name = match &chosen {
                Chosen::Trained(a) => a.algorithm.name(),
                Chosen::Twap(_) => "twap",
                Chosen::ClosedForm(_) => "closed-form",
            };
            let seed = RunSeed(common.seed());
            let eval = evaluate_policy(&env, chosen.view(), episodes, seed, common.exec())?;
            let report = compare(&env, &[(name, chosen.view())], episodes, seed, common.exec())?;
            print_json(&json!({
                "agent": name,
                "episodes": episodes,
                "return": eval.return_summary,
                "effective_cash": eval.cash_summary,
                "against_twap": report.row(name),
            }))?;
            Ok(true)
        }
        Command::Estimate { common, checkpoint, episodes } => {
            let env = common.environment()?;
            let chosen = if checkpoint.is_none() && common.algo.is_none() && common.config.is_none() {
                Chosen::Twap(Twap::new(&env))
            } else {
                choose(&common, &env, checkpoint.as_deref())?
            };
            let seed = RunSeed(common.seed());
            let trajs = vwaplab::lab::metrics::rollouts(&env, chosen.view(), episodes, seed, common.exec())?;
            let stats = ImpactStats::from_batch(&trajs, env.step());
            let sigma = env.market().sigma;
            print_json(&json!({
                "b_hat": stats.b_hat()?,
                "b_standard_error": stats.b_standard_error(sigma),
                "k_hat": stats.k_hat()?,
                "episodes": episodes,
                "steps": stats.steps,
                "k_steps": stats.k_count,
                "sum_v2_h": stats.sum_v2h,
                "true_b": env.market().b,
                "true_k": env.market().k,
            }))?;
            Ok(true)
        }
        Command::Compare { common, agents, episodes } => {
            let env = common.environment()?;
            let cf = ClosedForm::new(&env)?;
            let deterministic = cf.policy(false);
            let exploratory = cf.policy(true);
            let mut loaded = Vec::new();
            for spec in &agents {
                let (name, path) =
                    spec.split_once('=').with_context(|| format!("`{spec}` is not of the form name=path"))?;
                loaded.push((name.to_string(), load_checkpoint(Path::new(path))?));
            }
            let mut list: Vec<(&str, &(dyn vwaplab::Policy + Sync))> =
                vec![("closed-form", &exploratory), ("closed-form-deterministic", &deterministic)];
            for (name, agent) in &loaded {
                list.push((name.as_str(), agent));
            }
            let report = compare(&env, &list, episodes, RunSeed(common.seed()), common.exec())?;
            let text = serde_json::to_string_pretty(&report)?;
            match &common.out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(true)
        }
        Command::PolicyTable { common, checkpoint } => {
            let env = common.environment()?;
            let chosen = choose(&common, &env, checkpoint.as_deref())?;
            let rows = write_policy_table(&env, chosen.view(), output(common.out.as_ref())?)?;
            eprintln!("{rows} policy-table rows");
            if let Some(out) = &common.out {
                let heat = out.with_extension("heatmap.csv");
                let n = write_heatmap(&env, chosen.view(), RunSeed(common.seed()), BufWriter::new(File::create(&heat)?))?;
                eprintln!("{n} heatmap rows in {}", heat.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
