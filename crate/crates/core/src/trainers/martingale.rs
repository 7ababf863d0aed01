//! Critic updates built on the martingale property of
//! `M_t = V(t, Y_t) + int_0^t (r - gamma log pi) ds`.
//!
//! The martingale loss regresses `V(t_i, Y_i)` on the realized regularized
//! return-to-go. The orthogonality version minimizes `A^2 / 2` with
//! `A = sum_i xi_i (V_{i+1} - V_i + r_i - gamma log pi_i h)` for random test
//! values `xi`, with `V_G` replaced by the observed `f(Y_T)`.

use rand::Rng;

use crate::critic::Critic;
use crate::error::{Error, Result};
use crate::market::Trajectory;
use crate::params::Environment;
use crate::rng::StreamRng;
use crate::trainers::adp::returns_to_go;

/// A parameter direction with the loss it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticDelta {
    pub delta: Vec<f64>,
    pub loss: f64,
}

fn check(delta: CriticDelta, what: &str) -> Result<CriticDelta> {
    if !delta.loss.is_finite() || delta.delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::non_finite(what.to_string()));
    }
    Ok(delta)
}

fn entropy_term(log_density: Option<f64>, env: &Environment) -> f64 {
    log_density.map_or(0.0, |l| env.penalty().gamma * l * env.step())
}

/// `dTheta = sum_i (G_i - V_i) dV_i/dTheta h`, an ascent direction; `loss`
/// is `sum_i (G_i - V_i)^2 h`.
pub fn ml_critic_delta<C: Critic + ?Sized>(critic: &C, traj: &Trajectory, env: &Environment) -> Result<CriticDelta> {
    let h = env.step();
    let targets = returns_to_go(traj, env, true);
    let mut delta = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    for (i, step) in traj.steps.iter().enumerate() {
        let t = env.grid().time(i);
        let residual = targets[i] - critic.value(t, &step.state);
        loss += residual * residual * h;
        critic.accumulate_grad(t, &step.state, residual * h, &mut delta);
    }
    check(CriticDelta { delta, loss }, "martingale-loss critic delta")
}

/// `xi_i ~ U(0, 1)` for `i < G - 1` and `xi_{G-1} = 1`.
pub fn draw_test_function(rng: &mut StreamRng, n_steps: usize) -> Vec<f64> {
    let mut xi: Vec<f64> = (0..n_steps).map(|_| rng.random::<f64>()).collect();
    if let Some(last) = xi.last_mut() {
        *last = 1.0;
    }
    xi
}

/// `A = sum_i xi_i (dV_i + r_i - gamma log pi_i h)` with `V_G = f(Y_T)`.
pub fn mo_residual<C: Critic + ?Sized>(critic: &C, traj: &Trajectory, xi: &[f64], env: &Environment) -> Result<f64> {
    if xi.len() != traj.len() {
        return Err(Error::DimensionMismatch { expected: traj.len(), found: xi.len() });
    }
    let values = node_values(critic, traj, env);
    Ok(traj
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| xi[i] * (values[i + 1] - values[i] + step.reward - entropy_term(step.log_density, env)))
        .sum())
}

fn node_values<C: Critic + ?Sized>(critic: &C, traj: &Trajectory, env: &Environment) -> Vec<f64> {
    let n = traj.len();
    let mut values: Vec<f64> = (0..n).map(|i| critic.value(env.grid().time(i), traj.state(i))).collect();
    values.push(traj.terminal_reward);
    values
}

/// `dTheta = A sum_i xi_i d(dV_i)/dTheta`, a descent direction for `A^2/2`;
/// `loss` is `A^2`.
pub fn mo_critic_delta<C: Critic + ?Sized>(
    critic: &C,
    traj: &Trajectory,
    xi: &[f64],
    env: &Environment,
) -> Result<CriticDelta> {
    let a = mo_residual(critic, traj, xi, env)?;
    let n = traj.len();
    let mut delta = vec![0.0; critic.num_params()];
    // d(dV_i) = dV_{i+1} - dV_i, with dV_G = 0; collect the weight per node
    for i in 0..n {
        let weight = if i == 0 { -xi[0] } else { xi[i - 1] - xi[i] };
        if weight != 0.0 {
            critic.accumulate_grad(env.grid().time(i), traj.state(i), a * weight, &mut delta);
        }
    }
    check(CriticDelta { delta, loss: a * a }, "orthogonality critic delta")
}
