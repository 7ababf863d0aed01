//! Jump-diffusion market simulator.
//!
//! The state is `(S, X, Q, mu)`: midprice, cash, inventory and the market
//! trading speed. One step of length `h` under speed `v`:
//!
//! ```text
//! S' = S - b v h + sigma sqrt(h) Z
//! X' = X + (S' - k v) v h
//! Q' = Q - v h
//! mu' = (1 - kappa h) mu + (sum of Poisson(lambda h) exponential jumps)
//! ```
//!
//! The running reward `-phi (v - rho mu)^2 h` uses the pre-step speed.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Environment;
use crate::rng::{EpisodeRng, MarketNoise, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub s: f64,
    pub x: f64,
    pub q: f64,
    pub mu: f64,
    pub t_index: usize,
}

impl MarketState {
    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.x.is_finite() && self.q.is_finite() && self.mu.is_finite()
    }
}

/// What a policy returns at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub speed: f64,
    /// `log pi(v | t, Y)`; `None` for deterministic policies.
    pub log_density: Option<f64>,
}

impl Action {
    pub fn deterministic(speed: f64) -> Self {
        Action { speed, log_density: None }
    }
}

/// Maps `(t, state)` to an action. `rng` is the episode's policy stream.
pub trait Policy {
    fn act(&self, t: f64, state: &MarketState, rng: &mut StreamRng) -> Action;
}

impl<F> Policy for F
where
    F: Fn(f64, &MarketState, &mut StreamRng) -> Action,
{
    fn act(&self, t: f64, state: &MarketState, rng: &mut StreamRng) -> Action {
        self(t, state, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: MarketState,
    pub reward: f64,
    /// Execution price `S' - k v`.
    pub exec_price: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// State before the action.
    pub state: MarketState,
    pub action: f64,
    /// Running reward, already multiplied by `h`.
    pub reward: f64,
    pub log_density: Option<f64>,
    pub exec_price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub terminal_state: MarketState,
    pub terminal_reward: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State at node `i`, with `i == len()` giving the terminal state.
    pub fn state(&self, i: usize) -> &MarketState {
        if i == self.steps.len() {
            &self.terminal_state
        } else {
            &self.steps[i].state
        }
    }

    /// Sum of running rewards plus the terminal reward; no entropy terms.
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum::<f64>() + self.terminal_reward
    }

    /// Terminal cash with the residual block valued at `S_T - alpha Q_T`.
    pub fn effective_cash(&self) -> f64 {
        self.terminal_reward
    }

    /// Whether every step carries a log-density (stochastic policy).
    pub fn is_stochastic(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| s.log_density.is_some())
    }

    /// CSV with columns `t_index,t,S,X,Q,mu,v,reward,log_density`; one row
    /// per decision node, `log_density` left empty when deterministic.
    pub fn write_csv<W: Write>(&self, h: f64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_index", "t", "S", "X", "Q", "mu", "v", "reward", "log_density"])?;
        for step in &self.steps {
            let s = &step.state;
            w.write_record([
                s.t_index.to_string(),
                (s.t_index as f64 * h).to_string(),
                s.s.to_string(),
                s.x.to_string(),
                s.q.to_string(),
                s.mu.to_string(),
                step.action.to_string(),
                step.reward.to_string(),
                step.log_density.map(|l| l.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Environment {
    pub fn initial_state(&self) -> MarketState {
        let m = self.market();
        MarketState { s: m.s0, x: m.x0, q: m.q0, mu: m.mu0, t_index: 0 }
    }

    /// One exponential jump size with mean `eta_mean`.
    pub fn sample_eta(&self, rng: &mut StreamRng) -> f64 {
        Exp::new(1.0 / self.market().eta_mean).expect("eta_mean > 0").sample(rng)
    }

    /// Explicit-Euler decay plus the compound-Poisson jump sum over one step.
    pub fn step_mu(&self, mu: f64, noise: &mut MarketNoise) -> f64 {
        let m = self.market();
        let h = self.step();
        let intensity = m.lambda * h;
        let count = if intensity > 0.0 {
            Poisson::new(intensity).expect("positive intensity").sample(&mut noise.jump_count) as u64
        } else {
            0
        };
        let jumps: f64 = (0..count).map(|_| self.sample_eta(&mut noise.jump_size)).sum();
        (1.0 - m.kappa * h) * mu + jumps
    }

    pub fn running_reward(&self, v: f64, mu: f64) -> f64 {
        let p = self.penalty();
        let gap = v - p.rho * mu;
        -p.phi * gap * gap * self.step()
    }

    pub fn env_step(&self, state: &MarketState, v: f64, noise: &mut MarketNoise) -> Transition {
        let m = self.market();
        let h = self.step();
        let z: f64 = if m.sigma > 0.0 { noise.price.sample(StandardNormal) } else { 0.0 };
        let s = state.s - m.b * v * h + m.sigma * h.sqrt() * z;
        let exec_price = s - m.k * v;
        let next = MarketState {
            s,
            x: state.x + exec_price * v * h,
            q: state.q - v * h,
            mu: self.step_mu(state.mu, noise),
            t_index: state.t_index + 1,
        };
        Transition { next, reward: self.running_reward(v, state.mu), exec_price }
    }

    /// `f(Y_T) = x + q (s - alpha q)`.
    pub fn terminal_reward(&self, state: &MarketState) -> f64 {
        state.x + state.q * (state.s - self.market().alpha * state.q)
    }

    pub fn rollout<P: Policy + ?Sized>(&self, policy: &P, rng: &mut EpisodeRng) -> Result<Trajectory> {
        let n = self.grid().n_steps;
        let mut steps = Vec::with_capacity(n);
        let mut state = self.initial_state();
        for i in 0..n {
            let t = self.grid().time(i);
            let action = policy.act(t, &state, &mut rng.policy);
            if !action.speed.is_finite() {
                return Err(Error::NonFiniteAction { node: i, value: action.speed });
            }
            let tr = self.env_step(&state, action.speed, &mut rng.market);
            steps.push(StepRecord {
                state,
                action: action.speed,
                reward: tr.reward,
                log_density: action.log_density,
                exec_price: tr.exec_price,
            });
            state = tr.next;
        }
        Ok(Trajectory { steps, terminal_reward: self.terminal_reward(&state), terminal_state: state })
    }
}

/// Constant-speed liquidation `q0 / T`.
#[derive(Clone, Copy, Debug)]
pub struct Twap {
    pub speed: f64,
}

impl Twap {
    pub fn new(env: &Environment) -> Self {
        Twap { speed: env.market().q0 / env.grid().t_end }
    }
}

impl Policy for Twap {
    fn act(&self, _t: f64, _state: &MarketState, _rng: &mut StreamRng) -> Action {
        Action::deterministic(self.speed)
    }
}

/// Standard normal draw; shared by the policy samplers.
pub(crate) fn standard_normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}
