//! Out-of-sample evaluation and the comparison against TWAP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::market::{Policy, Trajectory, Twap};
use crate::params::Environment;
use crate::rng::{Domain, RunSeed};

/// `(agent - twap) / twap`.
pub fn delta_pnl(agent: f64, twap: f64) -> Result<f64> {
    if twap == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((agent - twap) / twap)
}

/// Sample mean, standard deviation (`n - 1`) and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std: f64::NAN, se: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, se: std / (n as f64).sqrt(), n }
    }
}

/// Per-episode total return (running rewards plus terminal reward, no
/// entropy terms) and effective terminal cash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub cash: Vec<f64>,
    pub return_summary: Summary,
    pub cash_summary: Summary,
}

impl Evaluation {
    fn from_trajectories(trajs: &[Trajectory]) -> Self {
        let returns: Vec<f64> = trajs.iter().map(Trajectory::total_return).collect();
        let cash: Vec<f64> = trajs.iter().map(Trajectory::effective_cash).collect();
        Evaluation { return_summary: Summary::of(&returns), cash_summary: Summary::of(&cash), returns, cash }
    }
}

/// Rollouts on evaluation episodes `0..n`. Episode `j` has the same market
/// noise for every policy, so evaluations of different policies are paired.
pub fn rollouts<P: Policy + Sync + ?Sized>(
    env: &Environment,
    policy: &P,
    n: usize,
    seed: RunSeed,
    exec: Exec,
) -> Result<Vec<Trajectory>> {
    exec.map(n, |j| env.rollout(policy, &mut seed.episode(Domain::Evaluation, j as u64))).into_iter().collect()
}

pub fn evaluate_policy<P: Policy + Sync + ?Sized>(
    env: &Environment,
    policy: &P,
    n: usize,
    seed: RunSeed,
    exec: Exec,
) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::invalid("episodes", "must be at least 1"));
    }
    Ok(Evaluation::from_trajectories(&rollouts(env, policy, n, seed, exec)?))
}

/// One agent's line in the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent: String,
    /// Average Return: mean and std of the per-episode total return.
    pub return_mean: f64,
    pub return_std: f64,
    pub return_se: f64,
    /// Per-episode `(R_agent - R_twap) / R_twap` on paired episodes.
    pub delta_pnl_mean: f64,
    pub delta_pnl_std: f64,
    /// Effective terminal cash `x_T + q_T (s_T - alpha q_T)`.
    pub cash_mean: f64,
    pub cash_std: f64,
    /// Per-episode relative effective-cash difference against TWAP.
    pub delta_cash_mean: f64,
    pub delta_cash_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub environment: Environment,
    pub seed: u64,
    pub episodes: usize,
    pub units: Units,
    pub twap: Evaluation,
    pub rows: Vec<ComparisonRow>,
}

/// Unit annotations written alongside the numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub returns: String,
    pub delta_pnl: String,
    pub cash: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            returns: "currency; running rewards plus terminal reward, entropy excluded".into(),
            delta_pnl: "dimensionless; relative to TWAP on the same episode".into(),
            cash: "currency; x_T + q_T (s_T - alpha q_T)".into(),
        }
    }
}

impl ComparisonReport {
    pub fn row(&self, agent: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.agent == agent)
    }
}

fn relative(values: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    values.iter().zip(reference).map(|(v, r)| delta_pnl(*v, *r)).collect()
}

pub fn comparison_row(name: &str, eval: &Evaluation, twap: &Evaluation) -> Result<ComparisonRow> {
    let d = Summary::of(&relative(&eval.returns, &twap.returns)?);
    let c = Summary::of(&relative(&eval.cash, &twap.cash)?);
    Ok(ComparisonRow {
        agent: name.to_string(),
        return_mean: eval.return_summary.mean,
        return_std: eval.return_summary.std,
        return_se: eval.return_summary.se,
        delta_pnl_mean: d.mean,
        delta_pnl_std: d.std,
        cash_mean: eval.cash_summary.mean,
        cash_std: eval.cash_summary.std,
        delta_cash_mean: c.mean,
        delta_cash_std: c.std,
    })
}

/// Evaluates every agent and TWAP on the same `n` episodes.
pub fn compare(
    env: &Environment,
    agents: &[(&str, &(dyn Policy + Sync))],
    n: usize,
    seed: RunSeed,
    exec: Exec,
) -> Result<ComparisonReport> {
    let twap = evaluate_policy(env, &Twap::new(env), n, seed, exec)?;
    let mut rows = vec![comparison_row("twap", &twap, &twap)?];
    for (name, policy) in agents {
        let eval = evaluate_policy(env, *policy, n, seed, exec)?;
        rows.push(comparison_row(name, &eval, &twap)?);
    }
    Ok(ComparisonReport { environment: *env, seed: seed.0, episodes: n, units: Units::default(), twap, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MarketParams;

    #[test]
    fn delta_pnl_arithmetic() {
        assert_eq!(delta_pnl(3.0, 3.0).unwrap(), 0.0);
        assert!((delta_pnl(1.13 * 20.0, 20.0).unwrap() - 0.13).abs() < 1e-12);
        assert!((delta_pnl(17.55, 25.0).unwrap() + 0.298).abs() < 1e-12);
        assert!(matches!(delta_pnl(1.0, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn deterministic_env_has_zero_spread() {
        let base = Environment::env1();
        let env = base.with_market(MarketParams { sigma: 0.0, lambda: 0.0, ..*base.market() }).unwrap();
        let e = evaluate_policy(&env, &Twap::new(&env), 20, RunSeed(3), Exec::Sequential).unwrap();
        assert_eq!(e.return_summary.std, 0.0);
        assert_eq!(e.cash_summary.std, 0.0);
    }

    #[test]
    fn evaluation_is_reproducible_and_mode_independent() {
        let env = Environment::env2();
        let a = evaluate_policy(&env, &Twap::new(&env), 100, RunSeed(5), Exec::Sequential).unwrap();
        let b = evaluate_policy(&env, &Twap::new(&env), 100, RunSeed(5), Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.se - s.std / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).std, 0.0);
    }
}
