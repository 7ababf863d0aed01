//! Epoch loop shared by the three learners.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedForm;
use crate::critic::{Critic, ValueNet};
use crate::error::{Error, Result};
use crate::estimators::ImpactStats;
use crate::gaussian::{ActorNet, GaussianActor, GaussianPolicySpec};
use crate::market::{Action, MarketState, Policy, Trajectory};
use crate::nn::{sgd_step, Direction, Feature, LrSchedule, DEFAULT_FEATURES};
use crate::params::Environment;
use crate::rng::{Domain, RunSeed, Stream, StreamRng};
use crate::trainers::adp::{adp_actor_update, adp_critic_update, adp_exploratory_policy, adp_targets};
use crate::trainers::martingale::{draw_test_function, ml_critic_delta, mo_critic_delta};
use crate::trainers::policy_gradient::{policy_delta, TerminalValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Adp,
    AdpExplore,
    MlAc,
    MoAc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Adp, Algorithm::AdpExplore, Algorithm::MlAc, Algorithm::MoAc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adp => "adp",
            Algorithm::AdpExplore => "adp-explore",
            Algorithm::MlAc => "ml-ac",
            Algorithm::MoAc => "mo-ac",
        }
    }

    pub fn is_actor_critic(self) -> bool {
        matches!(self, Algorithm::MlAc | Algorithm::MoAc)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Everything a training run needs besides the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub seed: u64,
    /// Initial critic rate: `alpha_Theta` for ADP, ML and MO alike.
    pub critic_rate: f64,
    /// Initial actor rate `alpha_Phi`.
    pub actor_rate: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_features: Vec<Feature>,
    pub actor_features: Vec<Feature>,
    /// Add the book value `x + q S` to the critic network.
    pub critic_baseline: bool,
    /// Episodes per update.
    pub batch: usize,
    /// Rollouts per epoch for the progress report.
    pub monitor_episodes: usize,
    #[serde(default)]
    pub terminal_value: TerminalValue,
    pub max_consecutive_aborts: usize,
    /// Rescale the actor-critic update directions to at most this
    /// Euclidean norm; unset means plain SGD.
    #[serde(default)]
    pub actor_clip: Option<f64>,
    #[serde(default)]
    pub critic_clip: Option<f64>,
}

impl TrainConfig {
    /// Defaults for `algorithm` with the reference network shape.
    pub fn new(algorithm: Algorithm) -> Self {
        let (critic_rate, actor_rate) = default_rates(algorithm);
        let actor_critic = matches!(algorithm, Algorithm::MlAc | Algorithm::MoAc);
        TrainConfig {
            algorithm,
            epochs: 1000,
            seed: 0,
            critic_rate,
            actor_rate,
            schedule: LrSchedule::default(),
            critic_hidden: vec![128, 64, 32],
            actor_hidden: vec![128, 64, 32],
            critic_features: DEFAULT_FEATURES.to_vec(),
            actor_features: DEFAULT_FEATURES.to_vec(),
            critic_baseline: true,
            batch: 1,
            monitor_episodes: 5,
            terminal_value: TerminalValue::Observed,
            max_consecutive_aborts: 3,
            actor_clip: if actor_critic { Some(100.0) } else { None },
            critic_clip: if actor_critic { Some(200.0) } else { None },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if !positive(self.critic_rate) {
            return Err(Error::invalid("critic_rate", "must be > 0"));
        }
        if !positive(self.actor_rate) {
            return Err(Error::invalid("actor_rate", "must be > 0"));
        }
        if !(positive(self.schedule.factor) && self.schedule.interval >= 1) {
            return Err(Error::invalid("schedule", "factor must be > 0 and interval >= 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch", "must be at least 1"));
        }
        if self.monitor_episodes == 0 {
            return Err(Error::invalid("monitor_episodes", "must be at least 1"));
        }
        if self.max_consecutive_aborts == 0 {
            return Err(Error::invalid("max_consecutive_aborts", "must be at least 1"));
        }
        for (field, clip) in [("actor_clip", self.actor_clip), ("critic_clip", self.critic_clip)] {
            if clip.is_some_and(|c| !positive(c)) {
                return Err(Error::invalid(field, "must be > 0 when set"));
            }
        }
        if self.critic_features.is_empty() || self.actor_features.is_empty() {
            return Err(Error::invalid("features", "need at least one input"));
        }
        if self.critic_hidden.contains(&0) || self.actor_hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

fn default_rates(algorithm: Algorithm) -> (f64, f64) {
    match algorithm {
        Algorithm::Adp | Algorithm::AdpExplore => (1e-6, 2e-4),
        Algorithm::MlAc | Algorithm::MoAc => (2e-4, 2e-3),
    }
}

/// A learner's networks plus the impact statistics ADP estimates from data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub algorithm: Algorithm,
    pub env: Environment,
    pub actor: ActorNet,
    pub critic: ValueNet,
    pub impact: ImpactStats,
}

impl Agent {
    pub fn new(env: &Environment, config: &TrainConfig) -> Self {
        let seed = RunSeed(config.seed);
        let critic = ValueNet::new(
            env,
            &config.critic_features,
            &config.critic_hidden,
            config.critic_baseline,
            &mut seed.stream(Domain::Init, 0, Stream::Weights),
        );
        let actor = ActorNet::new(
            env,
            &config.actor_features,
            &config.actor_hidden,
            &mut seed.stream(Domain::Init, 1, Stream::Weights),
        );
        Agent { algorithm: config.algorithm, env: *env, actor, critic, impact: ImpactStats::default() }
    }

    /// `(b_hat, k_hat)` from all data seen so far, zero before any data.
    pub fn impact_estimates(&self) -> (f64, f64) {
        (self.impact.b_hat().unwrap_or(0.0), self.impact.k_hat().unwrap_or(0.0))
    }

    /// Mean speed the agent would trade at.
    pub fn mean_speed(&self, t: f64, state: &MarketState) -> f64 {
        self.actor.policy_at(t, state).mean
    }

    /// The action distribution used for acting: a Dirac mass for ADP, the
    /// critic-implied Gaussian around the actor's mean for exploratory ADP,
    /// and the actor's Gaussian for the actor-critic learners.
    pub fn policy_spec(&self, t: f64, state: &MarketState) -> Result<GaussianPolicySpec> {
        let spec = self.actor.policy_at(t, state);
        match self.algorithm {
            Algorithm::Adp => Ok(GaussianPolicySpec { mean: spec.mean, std: 0.0 }),
            Algorithm::AdpExplore => {
                let (b, k) = self.impact_estimates();
                let critic = adp_exploratory_policy(&self.critic, t, state, &self.env, b, k)?;
                Ok(GaussianPolicySpec { mean: spec.mean, std: critic.std })
            }
            Algorithm::MlAc | Algorithm::MoAc => Ok(spec),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        self.algorithm != Algorithm::Adp
    }
}

impl Policy for Agent {
    fn act(&self, t: f64, state: &MarketState, rng: &mut StreamRng) -> Action {
        match self.policy_spec(t, state) {
            Ok(spec) => spec.sample(rng),
            Err(_) => Action::deterministic(f64::NAN),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    /// `None` when the epoch's update was aborted.
    pub critic_loss: Option<f64>,
    pub policy_mse: f64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochAbort {
    pub epoch: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub reports: Vec<EpochReport>,
    /// Policy MSE of the untrained agent on the monitoring rollouts.
    pub initial_policy_mse: f64,
    pub aborts: Vec<EpochAbort>,
}

/// Progress on the fixed monitoring episodes: returns and the mean squared
/// gap between the agent's mean speed and the closed-form optimum along
/// the visited states.
pub fn monitor(agent: &Agent, cf: &ClosedForm, seed: RunSeed, episodes: usize) -> Result<(Vec<f64>, f64)> {
    let env = &agent.env;
    let mut returns = Vec::with_capacity(episodes);
    let (mut sq, mut count) = (0.0, 0usize);
    for j in 0..episodes {
        let traj = env.rollout(agent, &mut seed.episode(Domain::Monitor, j as u64))?;
        returns.push(traj.total_return());
        for (i, step) in traj.steps.iter().enumerate() {
            let t = env.grid().time(i);
            sq += (agent.mean_speed(t, &step.state) - cf.optimal_speed(t, &step.state)).powi(2);
            count += 1;
        }
    }
    Ok((returns, sq / count as f64))
}

fn collect(agent: &Agent, seed: RunSeed, epoch: usize, batch: usize) -> Result<Vec<Trajectory>> {
    (0..batch)
        .map(|j| agent.env.rollout(agent, &mut seed.episode(Domain::Training, (epoch * batch + j) as u64)))
        .collect()
}

/// Scales `v` down to norm `max` when it is longer.
pub fn clip_norm(v: &mut [f64], max: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max {
        let scale = max / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

fn add_into(acc: &mut [f64], delta: &[f64]) {
    for (a, d) in acc.iter_mut().zip(delta) {
        *a += d;
    }
}

/// One epoch of rollouts and updates; returns the critic loss.
fn update(agent: &mut Agent, config: &TrainConfig, epoch: usize) -> Result<f64> {
    let seed = RunSeed(config.seed);
    let env = agent.env;
    let batch = collect(agent, seed, epoch, config.batch)?;
    let critic_rate = config.schedule.rate(config.critic_rate, epoch);
    let actor_rate = config.schedule.rate(config.actor_rate, epoch);
    let mut loss = 0.0;
    match config.algorithm {
        Algorithm::Adp | Algorithm::AdpExplore => {
            for traj in &batch {
                agent.impact.add(traj, env.step());
            }
            let (b, k) = agent.impact_estimates();
            for traj in &batch {
                loss += adp_critic_update(&mut agent.critic, traj, &env, critic_rate)?;
                let targets = adp_targets(&agent.critic, traj, &env, b, k)?;
                adp_actor_update(&mut agent.actor, traj, &targets, &env, actor_rate)?;
            }
        }
        Algorithm::MlAc | Algorithm::MoAc => {
            let mut critic_delta = vec![0.0; agent.critic.num_params()];
            let mut actor_delta = vec![0.0; agent.actor.params().len()];
            for (j, traj) in batch.iter().enumerate() {
                let d = if config.algorithm == Algorithm::MlAc {
                    ml_critic_delta(&agent.critic, traj, &env)?
                } else {
                    let index = (epoch * config.batch + j) as u64;
                    let mut rng = seed.stream(Domain::Training, index, Stream::TestFunction);
                    mo_critic_delta(&agent.critic, traj, &draw_test_function(&mut rng, traj.len()), &env)?
                };
                loss += d.loss;
                add_into(&mut critic_delta, &d.delta);
                add_into(&mut actor_delta, &policy_delta(&agent.actor, &agent.critic, traj, &env, config.terminal_value)?);
            }
            let direction =
                if config.algorithm == Algorithm::MlAc { Direction::Ascent } else { Direction::Descent };
            if let Some(max) = config.actor_clip {
                clip_norm(&mut actor_delta, max);
            }
            if let Some(max) = config.critic_clip {
                clip_norm(&mut critic_delta, max);
            }
            sgd_step(agent.actor.params_mut(), &actor_delta, actor_rate, Direction::Ascent)?;
            sgd_step(agent.critic.params_mut(), &critic_delta, critic_rate, direction)?;
        }
    }
    Ok(loss / config.batch as f64)
}

pub fn train(env: &Environment, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(env, config, |_, _| Ok(()))
}

/// Trains and calls `observer(epoch, agent)` after every epoch.
pub fn train_with<F>(env: &Environment, config: &TrainConfig, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochReport, &Agent) -> Result<()>,
{
    config.validate()?;
    let cf = ClosedForm::new(env)?;
    let seed = RunSeed(config.seed);
    let mut agent = Agent::new(env, config);
    let (_, initial_policy_mse) = monitor(&agent, &cf, seed, config.monitor_episodes)?;
    let mut reports = Vec::with_capacity(config.epochs);
    let mut aborts = Vec::new();
    let mut consecutive = 0;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let snapshot = agent.clone();
        let critic_loss = match update(&mut agent, config, epoch) {
            Ok(loss) => {
                consecutive = 0;
                Some(loss)
            }
            Err(e) => {
                agent = snapshot;
                aborts.push(EpochAbort { epoch, reason: e.to_string() });
                consecutive += 1;
                if consecutive >= config.max_consecutive_aborts {
                    return Err(Error::TooManyAborts(consecutive));
                }
                None
            }
        };
        let (returns, policy_mse) = monitor(&agent, &cf, seed, config.monitor_episodes)?;
        let report = EpochReport {
            epoch,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
            min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            critic_loss,
            policy_mse,
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        observer(&report, &agent)?;
        reports.push(report);
    }
    Ok(TrainOutcome { agent, reports, initial_policy_mse, aborts })
}
