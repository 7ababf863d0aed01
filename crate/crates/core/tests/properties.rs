//! Invariants over randomly drawn parameters, states and seeds.

use proptest::prelude::*;
use vwaplab::gaussian::{ActorNet, GaussianActor};
use vwaplab::lab::{delta_pnl, Summary};
use vwaplab::nn::{sgd_step, Direction, LrSchedule, ALL_FEATURES};
use vwaplab::rng::{Domain, Stream};
use vwaplab::{ClosedForm, Coefficient, Environment, MarketParams, MarketState, PenaltyParams, RunSeed};

fn environment() -> impl Strategy<Value = Environment> {
    (
        prop_oneof![Just(Environment::env1()), Just(Environment::env2())],
        0.0..2.0f64,
        0.0..2.0f64,
        0.05..50.0f64,
        1.5..200.0f64,
        0.0..0.1f64,
        1e-4..0.1f64,
        0.0..1.5f64,
    )
        .prop_map(|(base, b, k, phi, alpha_margin, rho, gamma, sigma)| {
            let m = MarketParams { b, k, alpha: b / 2.0 + alpha_margin, sigma, ..*base.market() };
            base.with_market(m)
                .unwrap()
                .with_penalty(PenaltyParams { phi, rho, gamma })
                .unwrap()
        })
}

fn state() -> impl Strategy<Value = (f64, MarketState)> {
    (0usize..100, 10.0..30.0f64, -10.0..40.0f64, -1.0..3.0f64, 0.0..80.0f64)
        .prop_map(|(i, s, x, q, mu)| (i as f64 / 100.0, MarketState { s, x, q, mu, t_index: i }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exploratory_mean_is_the_optimal_speed(env in environment(), (t, st) in state()) {
        let cf = ClosedForm::new(&env).unwrap();
        let spec = cf.optimal_exploratory_policy(t, &st);
        let v = cf.optimal_speed(t, &st);
        prop_assert!((spec.mean - v).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn variance_law(env in environment(), (t, st) in state()) {
        let cf = ClosedForm::new(&env).unwrap();
        let p = env.penalty();
        let std = cf.optimal_exploratory_policy(t, &st).std;
        let lhs = std * std * 2.0 * (p.phi + env.market().k);
        prop_assert!((lhs - p.gamma).abs() <= 4.0 * f64::EPSILON * p.gamma);
    }

    #[test]
    fn halving_gamma_shrinks_std_only(env in environment(), (t, st) in state()) {
        let p = *env.penalty();
        let half = env.with_penalty(PenaltyParams { gamma: p.gamma / 2.0, ..p }).unwrap();
        let a = ClosedForm::new(&env).unwrap().optimal_exploratory_policy(t, &st);
        let b = ClosedForm::new(&half).unwrap().optimal_exploratory_policy(t, &st);
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert!((b.std * std::f64::consts::SQRT_2 - a.std).abs() <= 4.0 * f64::EPSILON * a.std);
    }

    #[test]
    fn w2_decreases_monotonically_to_minus_alpha(env in environment()) {
        let cf = ClosedForm::new(&env).unwrap();
        let values: Vec<f64> = (0..=100).map(|i| cf.coefficient(Coefficient::W2, i as f64 / 100.0)).collect();
        prop_assert!(values.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!((values[100] + env.market().alpha).abs() < 1e-12 * env.market().alpha);
    }

    #[test]
    fn running_reward_is_nonpositive(env in environment(), v in -5.0..5.0f64, mu in 0.0..80.0f64) {
        let r = env.running_reward(v, mu);
        prop_assert!(r <= 0.0);
        prop_assert_eq!(env.running_reward(env.penalty().rho * mu, mu), 0.0);
    }

    #[test]
    fn bookkeeping_identities(env in environment(), seed in 0u64..1000, speed in -1.0..3.0f64) {
        let policy = ClosedForm::new(&env).unwrap().policy(true);
        let traj = env.rollout(&policy, &mut RunSeed(seed).episode(Domain::Test, 0)).unwrap();
        let m = env.market();
        let h = env.step();
        let sold: f64 = traj.steps.iter().map(|s| s.action).sum::<f64>() * h;
        prop_assert!((traj.terminal_state.q - (m.q0 - sold)).abs() <= 1e-9);
        let cash = m.x0 + traj.steps.iter().map(|s| s.exec_price * s.action).sum::<f64>() * h;
        prop_assert!((traj.terminal_state.x - cash).abs() <= 1e-9 * cash.abs().max(1.0));
        prop_assert!(traj.steps.iter().all(|s| s.state.mu >= 0.0 && s.state.is_finite()));
        prop_assert!((traj.terminal_reward - env.terminal_reward(&traj.terminal_state)).abs() == 0.0);

        let constant = move |_t: f64, _s: &MarketState, _r: &mut vwaplab::rng::StreamRng| vwaplab::Action::deterministic(speed);
        let traj = env.rollout(&constant, &mut RunSeed(seed).episode(Domain::Test, 1)).unwrap();
        prop_assert!((traj.terminal_state.q - (m.q0 - 100.0 * speed * h)).abs() <= 1e-9);
    }

    #[test]
    fn actor_std_is_positive_for_any_parameters(scale in -50.0..50.0f64, seed in 0u64..100, (t, st) in state()) {
        let env = Environment::env2();
        let mut actor = ActorNet::new(&env, &ALL_FEATURES, &[8], &mut RunSeed(seed).stream(Domain::Init, 0, Stream::Weights));
        for p in actor.params_mut() {
            *p *= scale;
        }
        let spec = actor.policy_at(t, &st);
        prop_assert!(spec.std > 0.0 && spec.std.is_finite() && spec.mean.is_finite());
    }

    #[test]
    fn sgd_directions(params in prop::collection::vec(-10.0..10.0f64, 1..20), rate in 0.0..1.0f64) {
        let grad: Vec<f64> = params.iter().map(|p| 0.5 * p + 1.0).collect();
        let mut up = params.clone();
        let mut down = params.clone();
        sgd_step(&mut up, &grad, rate, Direction::Ascent).unwrap();
        sgd_step(&mut down, &grad, rate, Direction::Descent).unwrap();
        for i in 0..params.len() {
            prop_assert_eq!(up[i], params[i] + rate * grad[i]);
            prop_assert_eq!(down[i], params[i] - rate * grad[i]);
        }
        let mut frozen = params.clone();
        sgd_step(&mut frozen, &grad, 0.0, Direction::Descent).unwrap();
        prop_assert_eq!(frozen, params);
    }

    #[test]
    fn schedule_decays_every_ten_epochs(initial in 1e-8..1.0f64, m in 0usize..2000) {
        let s = LrSchedule::default();
        prop_assert_eq!(s.rate(initial, 0), initial);
        prop_assert!(s.rate(initial, m) > 0.0);
        prop_assert!((s.rate(initial, m) - initial * 0.9f64.powi((m / 10) as i32)).abs() <= 1e-12 * initial);
    }

    #[test]
    fn delta_pnl_of_identical_results_is_zero(x in -1e3..1e3f64) {
        prop_assume!(x != 0.0);
        prop_assert_eq!(delta_pnl(x, x).unwrap(), 0.0);
        let s = Summary::of(&[x, x + 1.0, x - 3.0]);
        prop_assert!(s.std >= 0.0 && s.se >= 0.0);
    }
}

#[test]
fn schedule_ratio_is_exact() {
    let s = LrSchedule::default();
    assert_eq!(s.rate(1.0, 10) / s.rate(1.0, 0), 0.9);
    assert_eq!(s.rate(1.0, 9), 1.0);
}

#[test]
fn descent_on_a_parabola_contracts() {
    let mut theta = [1.0];
    for _ in 0..100 {
        let grad = [2.0 * theta[0]];
        sgd_step(&mut theta, &grad, 0.1, Direction::Descent).unwrap();
    }
    assert!(theta[0].abs() < 1e-9);
    let mut theta = [1.0];
    for _ in 0..100 {
        let grad = [-2.0 * theta[0]];
        sgd_step(&mut theta, &grad, 0.1, Direction::Ascent).unwrap();
    }
    assert!(theta[0].abs() < 1e-9);
}

#[test]
fn non_finite_gradients_are_rejected() {
    let mut p = [1.0, 2.0];
    assert!(sgd_step(&mut p, &[f64::NAN, 0.0], 0.1, Direction::Descent).is_err());
    assert!(sgd_step(&mut p, &[0.0], 0.1, Direction::Descent).is_err());
    assert_eq!(p, [1.0, 2.0]);
}
