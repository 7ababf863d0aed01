//! Experiment orchestration and file outputs.
//!
//! Per seed, under `<out>/seed-<n>/`:
//!
//! - `training_curve.csv`: epoch, mean_return, min_return, max_return, critic_loss, policy_mse
//! - `policy_mse.csv`: epoch, policy_mse (epoch -1 is the untrained agent)
//! - `checkpoint-<epoch>.json`, `checkpoint-final.json`
//! - `results.json`: the comparison against TWAP on the final episodes
//! - `heatmap.csv`: action densities per time slice along one evaluation path
//!
//! `<out>/summary.json` aggregates the seeds and `<out>/errors.json` lists
//! failed seeds.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedForm;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gaussian::GaussianPolicySpec;
use crate::lab::config::{AgentKind, ExperimentConfig};
use crate::lab::metrics::{compare, ComparisonReport, ComparisonRow, Summary};
use crate::market::{MarketState, Policy};
use crate::params::Environment;
use crate::rng::{Domain, RunSeed};
use crate::trainers::{train_with, Agent, EpochReport};

/// Anything that can describe its action distribution at a state.
pub trait PolicyView: Policy + Sync {
    fn spec(&self, t: f64, state: &MarketState) -> Result<GaussianPolicySpec>;
}

impl PolicyView for Agent {
    fn spec(&self, t: f64, state: &MarketState) -> Result<GaussianPolicySpec> {
        self.policy_spec(t, state)
    }
}

impl PolicyView for crate::closed_form::ClosedFormPolicy {
    fn spec(&self, t: f64, state: &MarketState) -> Result<GaussianPolicySpec> {
        let spec = self.cf.optimal_exploratory_policy(t, state);
        Ok(if self.exploratory { spec } else { GaussianPolicySpec { std: 0.0, ..spec } })
    }
}

impl PolicyView for crate::market::Twap {
    fn spec(&self, _t: f64, _state: &MarketState) -> Result<GaussianPolicySpec> {
        Ok(GaussianPolicySpec { mean: self.speed, std: 0.0 })
    }
}

pub const HEATMAP_POINTS: usize = 201;
pub const HEATMAP_WIDTH: f64 = 6.0;

/// Long-format heatmap rows: for every decision node of one evaluation
/// rollout, densities on `mean +- 6 std` with 201 points. Deterministic
/// policies have no density and produce no rows.
pub fn write_heatmap<P: PolicyView + ?Sized, W: Write>(
    env: &Environment,
    policy: &P,
    seed: RunSeed,
    out: W,
) -> Result<usize> {
    let traj = env.rollout(policy, &mut seed.episode(Domain::Evaluation, 0))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "q", "mu", "mean", "std", "v", "density"])?;
    let mut rows = 0;
    for (i, step) in traj.steps.iter().enumerate() {
        let t = env.grid().time(i);
        let spec = policy.spec(t, &step.state)?;
        if spec.is_deterministic() {
            continue;
        }
        let lo = spec.mean - HEATMAP_WIDTH * spec.std;
        let dv = 2.0 * HEATMAP_WIDTH * spec.std / (HEATMAP_POINTS - 1) as f64;
        for j in 0..HEATMAP_POINTS {
            let v = lo + j as f64 * dv;
            w.write_record(&[
                t.to_string(),
                step.state.q.to_string(),
                step.state.mu.to_string(),
                spec.mean.to_string(),
                spec.std.to_string(),
                v.to_string(),
                spec.density(v).to_string(),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

/// `(t, mu, q, mean, std)` on a grid: every tenth node, `mu` at
/// 0.5..1.5 of `mu0` and 26 inventories in `[0, q0]`, with `S = s0` and
/// `X = x0`.
pub fn write_policy_table<P: PolicyView + ?Sized, W: Write>(env: &Environment, policy: &P, out: W) -> Result<usize> {
    let m = env.market();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mu", "q", "mean", "std"])?;
    let mut rows = 0;
    let n = env.grid().n_steps;
    let stride = (n / 10).max(1);
    for i in (0..n).step_by(stride) {
        let t = env.grid().time(i);
        for mu_factor in [0.5, 0.75, 1.0, 1.25, 1.5] {
            for k in 0..=25 {
                let q = m.q0 * k as f64 / 25.0;
                let state = MarketState { s: m.s0, x: m.x0, q, mu: m.mu0 * mu_factor, t_index: i };
                let spec = policy.spec(t, &state)?;
                w.write_record(&[
                    t.to_string(),
                    state.mu.to_string(),
                    q.to_string(),
                    spec.mean.to_string(),
                    spec.std.to_string(),
                ])?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn save_checkpoint(agent: &Agent, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer(file, agent)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Agent> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<ComparisonReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_curves(dir: &Path, reports: &[EpochReport], initial_mse: f64) -> Result<()> {
    let mut curve = csv::Writer::from_path(dir.join("training_curve.csv"))?;
    curve.write_record(["epoch", "mean_return", "min_return", "max_return", "critic_loss", "policy_mse"])?;
    let mut mse = csv::Writer::from_path(dir.join("policy_mse.csv"))?;
    mse.write_record(["epoch", "policy_mse"])?;
    mse.write_record(["-1".to_string(), initial_mse.to_string()])?;
    for r in reports {
        curve.write_record(&[
            r.epoch.to_string(),
            r.mean_return.to_string(),
            r.min_return.to_string(),
            r.max_return.to_string(),
            r.critic_loss.map(|l| l.to_string()).unwrap_or_default(),
            r.policy_mse.to_string(),
        ])?;
        mse.write_record(&[r.epoch.to_string(), r.policy_mse.to_string()])?;
    }
    curve.flush()?;
    mse.flush()?;
    Ok(())
}

/// What one seed produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub agent: String,
    pub initial_policy_mse: Option<f64>,
    pub final_policy_mse: Option<f64>,
    pub aborted_epochs: usize,
    pub row: ComparisonRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedError {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub agent: String,
    pub seeds: Vec<SeedResult>,
    pub errors: Vec<SeedError>,
    /// Across-seed statistics of the per-seed means.
    pub return_mean: Option<Summary>,
    pub delta_pnl: Option<Summary>,
}

impl ExperimentSummary {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let dir = config.run.out.join(format!("seed-{seed}"));
    fs::create_dir_all(&dir)?;
    let env = &config.environment;
    let eval_seed = RunSeed(config.run.evaluation_seed);
    let episodes = config.run.final_episodes;
    let name = config.agent.name();
    let (report, initial, final_mse, aborted) = match config.agent {
        AgentKind::Trained(_) => {
            let mut train = config.train.clone();
            train.seed = seed;
            let every = config.run.checkpoint_every;
            let outcome = train_with(env, &train, |r, agent| {
                if every > 0 && (r.epoch + 1) % every == 0 {
                    save_checkpoint(agent, &dir.join(format!("checkpoint-{}.json", r.epoch + 1)))?;
                }
                Ok(())
            })?;
            write_curves(&dir, &outcome.reports, outcome.initial_policy_mse)?;
            save_checkpoint(&outcome.agent, &dir.join("checkpoint-final.json"))?;
            if !outcome.aborts.is_empty() {
                write_json(&dir.join("aborted_epochs.json"), &outcome.aborts)?;
            }
            let agent = &outcome.agent;
            let report = compare(env, &[(name, agent)], episodes, eval_seed, Exec::Sequential)?;
            write_heatmap(env, agent, eval_seed, BufWriter::new(File::create(dir.join("heatmap.csv"))?))?;
            let last = outcome.reports.last().map(|r| r.policy_mse);
            (report, Some(outcome.initial_policy_mse), last, outcome.aborts.len())
        }
        AgentKind::ClosedForm => {
            let policy = ClosedForm::new(env)?.policy(true);
            let report = compare(env, &[(name, &policy)], episodes, eval_seed, Exec::Sequential)?;
            write_heatmap(env, &policy, eval_seed, BufWriter::new(File::create(dir.join("heatmap.csv"))?))?;
            (report, None, Some(0.0), 0)
        }
        AgentKind::Twap => {
            let report = compare(env, &[], episodes, eval_seed, Exec::Sequential)?;
            (report, None, None, 0)
        }
    };
    write_json(&dir.join("results.json"), &report)?;
    let row = report.row(name).cloned().ok_or_else(|| Error::Config(format!("missing row for {name}")))?;
    Ok(SeedResult { seed, dir, agent: name.into(), initial_policy_mse: initial, final_policy_mse: final_mse, aborted_epochs: aborted, row })
}

/// Runs every seed (fanned out by `exec`), writes the per-seed files, the
/// summary and the error log. Seed failures do not stop the other seeds.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentSummary> {
    config.validate()?;
    fs::create_dir_all(&config.run.out)?;
    let seeds = &config.run.seeds;
    let results = exec.map(seeds.len(), |i| run_seed(config, seeds[i]));
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => errors.push(SeedError { seed: *seed, error: e.to_string() }),
        }
    }
    let across = |f: fn(&SeedResult) -> f64| -> Option<Summary> {
        (!ok.is_empty()).then(|| Summary::of(&ok.iter().map(f).collect::<Vec<_>>()))
    };
    let summary = ExperimentSummary {
        agent: config.agent.name().into(),
        return_mean: across(|r| r.row.return_mean),
        delta_pnl: across(|r| r.row.delta_pnl_mean),
        seeds: ok,
        errors,
    };
    write_json(&config.run.out.join("summary.json"), &summary)?;
    if !summary.errors.is_empty() {
        write_json(&config.run.out.join("errors.json"), &summary.errors)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::ClosedForm;

    #[test]
    fn heatmap_slices_integrate_to_one() {
        let env = Environment::env1();
        let policy = ClosedForm::new(&env).unwrap().policy(true);
        let mut buf = Vec::new();
        let rows = write_heatmap(&env, &policy, RunSeed(1), &mut buf).unwrap();
        assert_eq!(rows, 100 * HEATMAP_POINTS);
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        for slice in records.chunks(HEATMAP_POINTS) {
            let v: Vec<f64> = slice.iter().map(|r| r[5].parse().unwrap()).collect();
            let d: Vec<f64> = slice.iter().map(|r| r[6].parse().unwrap()).collect();
            let integral: f64 = (1..v.len()).map(|i| 0.5 * (d[i] + d[i - 1]) * (v[i] - v[i - 1])).sum();
            assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        }
    }

    #[test]
    fn deterministic_heatmap_is_empty() {
        let env = Environment::env1();
        let policy = ClosedForm::new(&env).unwrap().policy(false);
        assert_eq!(write_heatmap(&env, &policy, RunSeed(1), Vec::new()).unwrap(), 0);
    }

    #[test]
    fn policy_table_rows() {
        let env = Environment::env2();
        let policy = ClosedForm::new(&env).unwrap().policy(true);
        assert_eq!(write_policy_table(&env, &policy, Vec::new()).unwrap(), 10 * 5 * 26);
    }
}
