//! The likelihood-ratio update on a two-node toy with deterministic
//! transitions, against the gradient of the exactly integrated objective.

use gauss_quad::hermite::GaussHermite;
use vwaplab::critic::Critic;
use vwaplab::gaussian::{ActorNet, GaussianActor, GaussianPolicySpec};
use vwaplab::market::Action;
use vwaplab::nn::ALL_FEATURES;
use vwaplab::rng::{Domain, Stream, StreamRng};
use vwaplab::trainers::{policy_delta, TerminalValue};
use vwaplab::{Environment, MarketParams, MarketState, PenaltyParams, RunSeed, TimeGrid, Trajectory};

const NODES: usize = 40;

fn toy_env() -> Environment {
    let base = Environment::env2();
    base.with_market(MarketParams { sigma: 0.0, lambda: 0.0, q0: 0.02, ..*base.market() })
        .unwrap()
        .with_penalty(PenaltyParams { gamma: 0.0, ..*base.penalty() })
        .unwrap()
        .with_grid(TimeGrid { t_end: 0.02, n_steps: 2 })
        .unwrap()
}

fn toy_actor(env: &Environment) -> ActorNet {
    let mut actor = ActorNet::new(env, &ALL_FEATURES, &[4], &mut RunSeed(21).stream(Domain::Init, 0, Stream::Weights));
    let b = actor.output_bias();
    actor.params_mut()[b.start] += 1.0;
    actor.params_mut()[b.start + 1] += 0.5f64.ln();
    actor
}

struct Quadrature {
    rule: GaussHermite,
}

impl Quadrature {
    fn new() -> Self {
        Quadrature { rule: GaussHermite::new(NODES.try_into().unwrap()) }
    }

    /// `E[g(v)]` for `v ~ spec`.
    fn expect(&self, spec: GaussianPolicySpec, mut g: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * spec.std;
        self.rule.integrate(|x| g(spec.mean + scale * x)) / std::f64::consts::PI.sqrt()
    }
}

fn step(env: &Environment, state: &MarketState, v: f64) -> (MarketState, f64) {
    let tr = env.env_step(state, v, &mut RunSeed(0).episode(Domain::Scratch, 0).market);
    (tr.next, tr.reward)
}

fn value_at_node1(env: &Environment, actor: &ActorNet, quad: &Quadrature, y1: &MarketState) -> f64 {
    let t1 = env.grid().time(1);
    quad.expect(actor.policy_at(t1, y1), |v1| {
        let (y2, r1) = step(env, y1, v1);
        r1 + env.terminal_reward(&y2)
    })
}

fn objective(env: &Environment, actor: &ActorNet, quad: &Quadrature) -> f64 {
    let y0 = env.initial_state();
    quad.expect(actor.policy_at(0.0, &y0), |v0| {
        let (y1, r0) = step(env, &y0, v0);
        r0 + value_at_node1(env, actor, quad, &y1)
    })
}

/// The exact value of the current policy at each node.
struct TrueValue<'a> {
    env: &'a Environment,
    actor: &'a ActorNet,
    quad: &'a Quadrature,
}

impl Critic for TrueValue<'_> {
    fn value(&self, _t: f64, state: &MarketState) -> f64 {
        match state.t_index {
            0 => objective(self.env, self.actor, self.quad),
            1 => value_at_node1(self.env, self.actor, self.quad, state),
            _ => self.env.terminal_reward(state),
        }
    }
    fn accumulate_grad(&self, _t: f64, _state: &MarketState, _weight: f64, _out: &mut [f64]) {}
    fn params(&self) -> &[f64] {
        &[]
    }
    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }
}

fn finite_difference_gradient(env: &Environment, actor: &ActorNet, quad: &Quadrature) -> Vec<f64> {
    let eps = 1e-5;
    (0..actor.params().len())
        .map(|j| {
            let mut plus = actor.clone();
            plus.params_mut()[j] += eps;
            let mut minus = actor.clone();
            minus.params_mut()[j] -= eps;
            (objective(env, &plus, quad) - objective(env, &minus, quad)) / (2.0 * eps)
        })
        .collect()
}

fn fixed_rollout(env: &Environment, actor: &ActorNet, z: [f64; 2]) -> Trajectory {
    let policy = |t: f64, state: &MarketState, _rng: &mut StreamRng| {
        let spec = actor.policy_at(t, state);
        let v = spec.mean + spec.std * z[state.t_index];
        Action { speed: v, log_density: Some(spec.log_density(v)) }
    };
    env.rollout(&policy, &mut RunSeed(0).episode(Domain::Scratch, 0)).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

#[test]
fn expected_update_equals_the_quadrature_gradient() {
    let env = toy_env();
    let actor = toy_actor(&env);
    let quad = Quadrature::new();
    let critic = TrueValue { env: &env, actor: &actor, quad: &quad };
    let truth = finite_difference_gradient(&env, &actor, &quad);
    assert!(truth.iter().any(|g| g.abs() > 1e-3));

    let weight = 1.0 / std::f64::consts::PI;
    let mut weighted = vec![0.0; truth.len()];
    for (x0, w0) in quad.rule.iter() {
        for (x1, w1) in quad.rule.iter() {
            let z = [std::f64::consts::SQRT_2 * x0, std::f64::consts::SQRT_2 * x1];
            let traj = fixed_rollout(&env, &actor, z);
            let d = policy_delta(&actor, &critic, &traj, &env, TerminalValue::Observed).unwrap();
            for (e, di) in weighted.iter_mut().zip(&d) {
                *e += w0 * w1 * weight * di;
            }
        }
    }
    let worst = weighted.iter().zip(&truth).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
    assert!(worst < 1e-3, "worst relative error {worst:e}");
}

#[test]
fn monte_carlo_update_is_unbiased() {
    let env = toy_env();
    let actor = toy_actor(&env);
    let quad = Quadrature::new();
    let critic = TrueValue { env: &env, actor: &actor, quad: &quad };
    let truth = finite_difference_gradient(&env, &actor, &quad);

    let n = 10_000;
    let dim = truth.len();
    let (mut sum, mut sum_sq) = (vec![0.0; dim], vec![0.0; dim]);
    for j in 0..n {
        let traj = env.rollout(&actor.sampling(), &mut RunSeed(22).episode(Domain::Test, j)).unwrap();
        let d = policy_delta(&actor, &critic, &traj, &env, TerminalValue::Observed).unwrap();
        for i in 0..dim {
            sum[i] += d[i];
            sum_sq[i] += d[i] * d[i];
        }
    }
    let nf = n as f64;
    for i in 0..dim {
        let mean = sum[i] / nf;
        let var = (sum_sq[i] - nf * mean * mean) / (nf - 1.0);
        let se = (var / nf).sqrt();
        assert!((mean - truth[i]).abs() <= 3.0 * se, "component {i}: {mean} vs {} (se {se})", truth[i]);
    }
}

#[test]
fn constant_critic_update_averages_to_zero() {
    let env = toy_env();
    let actor = toy_actor(&env);
    let flat = vwaplab::critic::TabularCritic { values: vec![0.0; 3] };
    let n = 20_000;
    let bias = actor.output_bias();
    let mut samples = Vec::with_capacity(n);
    for j in 0..n {
        let mut traj = env.rollout(&actor.sampling(), &mut RunSeed(23).episode(Domain::Test, j as u64)).unwrap();
        for s in &mut traj.steps {
            s.reward = -0.7;
        }
        traj.terminal_reward = 0.0;
        let d = policy_delta(&actor, &flat, &traj, &env, TerminalValue::Observed).unwrap();
        samples.push(d[bias.start]);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
}
