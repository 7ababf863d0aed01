//! Adaptive dynamic programming: a critic regressed on realized returns and
//! an actor regressed on the first-order-condition speed
//!
//! ```text
//! v_hat = (S dV/dx - dV/dq - b_hat dV/dS + 2 phi rho mu) / (2 (k_hat dV/dx + phi))
//! ```

use crate::critic::{Critic, DifferentiableCritic};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianActor, GaussianPolicySpec};
use crate::market::{MarketState, Trajectory};
use crate::nn::{sgd_step, Direction};
use crate::params::Environment;

pub const MIN_DENOMINATOR: f64 = 1e-8;

/// Realized return-to-go `sum_{j >= i} r_j + f(Y_T)` for every node
/// `0..=G`; the last entry is `f(Y_T)`. `entropy` adds `-gamma log pi h`
/// per step when log-densities are present.
pub fn returns_to_go(traj: &Trajectory, env: &Environment, entropy: bool) -> Vec<f64> {
    let n = traj.len();
    let gamma = env.penalty().gamma;
    let h = env.step();
    let mut g = vec![0.0; n + 1];
    g[n] = traj.terminal_reward;
    for i in (0..n).rev() {
        let step = &traj.steps[i];
        let bonus = match (entropy, step.log_density) {
            (true, Some(l)) => -gamma * l * h,
            _ => 0.0,
        };
        g[i] = g[i + 1] + step.reward + bonus;
    }
    g
}

/// `E^c = sum_i (G_i - V(Y_i))^2 + (f(Y_T) - V(Y_T))^2` and its parameter
/// gradient.
pub fn adp_critic_gradient<C: Critic + ?Sized>(
    critic: &C,
    traj: &Trajectory,
    env: &Environment,
) -> (Vec<f64>, f64) {
    let targets = returns_to_go(traj, env, false);
    let mut grad = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let t = env.grid().time(i);
        let state = traj.state(i);
        let residual = target - critic.value(t, state);
        loss += residual * residual;
        critic.accumulate_grad(t, state, -2.0 * residual, &mut grad);
    }
    (grad, loss)
}

pub fn adp_critic_loss<C: Critic + ?Sized>(critic: &C, traj: &Trajectory, env: &Environment) -> f64 {
    returns_to_go(traj, env, false)
        .iter()
        .enumerate()
        .map(|(i, g)| (g - critic.value(env.grid().time(i), traj.state(i))).powi(2))
        .sum()
}

/// One descent step on `E^c`; returns the loss before the step.
pub fn adp_critic_update<C: Critic + ?Sized>(
    critic: &mut C,
    traj: &Trajectory,
    env: &Environment,
    rate: f64,
) -> Result<f64> {
    let (grad, loss) = adp_critic_gradient(critic, traj, env);
    if !loss.is_finite() {
        return Err(Error::non_finite("ADP critic loss"));
    }
    sgd_step(critic.params_mut(), &grad, rate, Direction::Descent)?;
    Ok(loss)
}

fn denominator(env: &Environment, k_hat: f64, dx_v: f64, node: usize) -> Result<f64> {
    let d = k_hat * dx_v + env.penalty().phi;
    if d.abs() <= MIN_DENOMINATOR || !d.is_finite() {
        return Err(Error::SmallDenominator { node, dx_v, denominator: d });
    }
    Ok(d)
}

/// First-order-condition speed from the critic's state gradient.
pub fn adp_target<C: DifferentiableCritic + ?Sized>(
    critic: &C,
    t: f64,
    state: &MarketState,
    env: &Environment,
    b_hat: f64,
    k_hat: f64,
) -> Result<f64> {
    let g = critic.state_gradient(t, state);
    let d = denominator(env, k_hat, g.x, state.t_index)?;
    let p = env.penalty();
    Ok((state.s * g.x - g.q - b_hat * g.s + 2.0 * p.phi * p.rho * state.mu) / (2.0 * d))
}

/// The Gaussian with mean `v_hat` and variance `gamma / (2 (phi + k_hat dV/dx))`.
pub fn adp_exploratory_policy<C: DifferentiableCritic + ?Sized>(
    critic: &C,
    t: f64,
    state: &MarketState,
    env: &Environment,
    b_hat: f64,
    k_hat: f64,
) -> Result<GaussianPolicySpec> {
    let g = critic.state_gradient(t, state);
    let d = denominator(env, k_hat, g.x, state.t_index)?;
    let p = env.penalty();
    let mean = (state.s * g.x - g.q - b_hat * g.s + 2.0 * p.phi * p.rho * state.mu) / (2.0 * d);
    let var = p.gamma / (2.0 * d);
    if var < 0.0 {
        return Err(Error::SmallDenominator { node: state.t_index, dx_v: g.x, denominator: d });
    }
    Ok(GaussianPolicySpec { mean, std: var.sqrt() })
}

/// Targets `v_hat_i` for every decision node of the trajectory.
pub fn adp_targets<C: DifferentiableCritic + ?Sized>(
    critic: &C,
    traj: &Trajectory,
    env: &Environment,
    b_hat: f64,
    k_hat: f64,
) -> Result<Vec<f64>> {
    traj.steps
        .iter()
        .enumerate()
        .map(|(i, step)| adp_target(critic, env.grid().time(i), &step.state, env, b_hat, k_hat))
        .collect()
}

/// One descent step on `E^a = sum_i (mean(Y_i) - v_hat_i)^2` with the targets
/// held fixed; returns the loss before the step.
pub fn adp_actor_update<A: GaussianActor + ?Sized>(
    actor: &mut A,
    traj: &Trajectory,
    targets: &[f64],
    env: &Environment,
    rate: f64,
) -> Result<f64> {
    if targets.len() != traj.len() {
        return Err(Error::DimensionMismatch { expected: traj.len(), found: targets.len() });
    }
    let mut grad = vec![0.0; actor.params().len()];
    let mut loss = 0.0;
    for (i, (step, target)) in traj.steps.iter().zip(targets).enumerate() {
        let t = env.grid().time(i);
        let residual = actor.policy_at(t, &step.state).mean - target;
        loss += residual * residual;
        actor.accumulate_mean_grad(t, &step.state, 2.0 * residual, &mut grad);
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("ADP actor loss"));
    }
    sgd_step(actor.params_mut(), &grad, rate, Direction::Descent)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::ClosedForm;
    use crate::critic::{SurrogateValue, TabularCritic};
    use crate::market::Twap;
    use crate::params::PenaltyParams;
    use crate::rng::{Domain, RunSeed};

    #[test]
    fn constant_critic_quadratic() {
        let env = Environment::env2();
        let traj = env.rollout(&Twap::new(&env), &mut RunSeed(4).episode(Domain::Test, 0)).unwrap();
        let g = returns_to_go(&traj, &env, false);
        let mut critic = TabularCritic { values: vec![3.0; 101] };
        let expected: f64 = g.iter().map(|gi| (gi - 3.0).powi(2)).sum();
        let (grad, loss) = adp_critic_gradient(&critic, &traj, &env);
        assert!((loss - expected).abs() < 1e-9 * expected);
        for (i, gi) in g.iter().enumerate() {
            assert!((grad[i] + 2.0 * (gi - 3.0)).abs() < 1e-12);
        }
        let before = adp_critic_update(&mut critic, &traj, &env, 0.1).unwrap();
        assert!(adp_critic_loss(&critic, &traj, &env) < before);
    }

    #[test]
    fn surrogate_target_is_optimal_speed() {
        for env in [Environment::env1(), Environment::env2()] {
            let cf = ClosedForm::new(&env).unwrap();
            let critic = SurrogateValue { cf };
            let (b, k) = (env.market().b, env.market().k);
            let state = MarketState { s: 20.3, x: 4.0, q: 0.9, mu: 31.0, t_index: 30 };
            let v = adp_target(&critic, 0.3, &state, &env, b, k).unwrap();
            assert!((v - cf.optimal_speed(0.3, &state)).abs() < 1e-12);
            let spec = adp_exploratory_policy(&critic, 0.3, &state, &env, b, k).unwrap();
            assert!((spec.std - cf.exploratory_std()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gamma_gives_dirac() {
        let env = Environment::env1();
        let env = env.with_penalty(PenaltyParams { gamma: 0.0, ..*env.penalty() }).unwrap();
        let critic = SurrogateValue { cf: ClosedForm::new(&env).unwrap() };
        let spec = adp_exploratory_policy(&critic, 0.1, &env.initial_state(), &env, 0.1, 0.1).unwrap();
        assert_eq!(spec.std, 0.0);
    }

    #[test]
    fn small_denominator_is_reported() {
        let env = Environment::env1();
        let critic = SurrogateValue { cf: ClosedForm::new(&env).unwrap() };
        // phi + k_hat * 1 = 0
        let err = adp_target(&critic, 0.1, &env.initial_state(), &env, 0.1, -0.1).unwrap_err();
        assert!(matches!(err, Error::SmallDenominator { node: 0, .. }));
    }
}
