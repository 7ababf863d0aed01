//! Likelihood-ratio policy gradient with the critic's temporal difference
//! as the advantage:
//!
//! ```text
//! dPhi = sum_i score_i [V_{i+1} - V_i + r_i - (gamma log pi_i + gamma) h]
//! ```

use serde::{Deserialize, Serialize};

use crate::critic::Critic;
use crate::error::{Error, Result};
use crate::gaussian::GaussianActor;
use crate::market::Trajectory;
use crate::params::Environment;

/// What stands in for `V(t_G, Y_T)` in the last temporal difference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalValue {
    /// The realized terminal reward `f(Y_T)`.
    #[default]
    Observed,
    /// The critic evaluated at the terminal node.
    Critic,
}

/// Temporal differences `V_{i+1} - V_i + r_i - (gamma log pi_i + gamma) h`.
pub fn advantages<C: Critic + ?Sized>(
    critic: &C,
    traj: &Trajectory,
    env: &Environment,
    terminal: TerminalValue,
) -> Result<Vec<f64>> {
    let n = traj.len();
    let gamma = env.penalty().gamma;
    let h = env.step();
    let mut values: Vec<f64> = (0..n).map(|i| critic.value(env.grid().time(i), traj.state(i))).collect();
    values.push(match terminal {
        TerminalValue::Observed => traj.terminal_reward,
        TerminalValue::Critic => critic.value(env.grid().time(n), &traj.terminal_state),
    });
    traj.steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let log_pi = step
                .log_density
                .ok_or(Error::EstimationUndefined("policy gradient needs log-densities"))?;
            Ok(values[i + 1] - values[i] + step.reward - (gamma * log_pi + gamma) * h)
        })
        .collect()
}

/// The ascent direction `dPhi`.
pub fn policy_delta<A: GaussianActor + ?Sized, C: Critic + ?Sized>(
    actor: &A,
    critic: &C,
    traj: &Trajectory,
    env: &Environment,
    terminal: TerminalValue,
) -> Result<Vec<f64>> {
    let adv = advantages(critic, traj, env, terminal)?;
    let mut delta = vec![0.0; actor.params().len()];
    for (i, (step, a)) in traj.steps.iter().zip(&adv).enumerate() {
        actor.accumulate_score(env.grid().time(i), &step.state, step.action, *a, &mut delta);
    }
    if let Some(i) = delta.iter().position(|d| !d.is_finite()) {
        return Err(Error::non_finite(format!("policy delta component {i}")));
    }
    Ok(delta)
}
