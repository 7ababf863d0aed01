//! Gaussian policies: the `(mean, std)` description, sampling, log-density,
//! and the network-backed actor with its score function.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::{standard_normal, Action, MarketState, Policy};
use crate::nn::{Activation, DenseNet, Feature, FeatureMap};
use crate::params::Environment;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicySpec {
    pub mean: f64,
    pub std: f64,
}

impl GaussianPolicySpec {
    pub fn is_deterministic(&self) -> bool {
        self.std == 0.0
    }

    pub fn log_density(&self, v: f64) -> f64 {
        let var = self.std * self.std;
        let d = v - self.mean;
        -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
    }

    pub fn density(&self, v: f64) -> f64 {
        self.log_density(v).exp()
    }

    /// `v = mean + std Z` with its log-density. A zero std yields the mean
    /// and no density (Dirac mass).
    pub fn sample(&self, rng: &mut StreamRng) -> Action {
        if self.is_deterministic() {
            return Action::deterministic(self.mean);
        }
        let z = standard_normal(rng);
        let v = self.mean + self.std * z;
        Action { speed: v, log_density: Some(-0.5 * (2.0 * PI * self.std * self.std).ln() - 0.5 * z * z) }
    }
}

/// Running reward with the entropy bonus: `reward - gamma * log_density * h`.
pub fn entropy_penalized_reward(reward: f64, log_density: f64, gamma: f64, h: f64) -> f64 {
    reward - gamma * log_density * h
}

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 3.0;

/// A parametric Gaussian policy with a score function.
pub trait GaussianActor {
    fn policy_at(&self, t: f64, state: &MarketState) -> GaussianPolicySpec;

    /// Adds `weight * d log pi(v | t, state) / d params` into `out`.
    fn accumulate_score(&self, t: f64, state: &MarketState, v: f64, weight: f64, out: &mut [f64]);

    /// Adds `weight * d mean / d params` into `out`.
    fn accumulate_mean_grad(&self, t: f64, state: &MarketState, weight: f64, out: &mut [f64]);

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn score(&self, t: f64, state: &MarketState, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.params().len()];
        self.accumulate_score(t, state, v, 1.0, &mut out);
        out
    }
}

/// Network with two outputs: the mean and a raw log-std `s`, with
/// `std = exp(clamp(s, -10, 3))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorNet {
    pub net: DenseNet,
    pub features: FeatureMap,
}

impl ActorNet {
    /// Glorot weights; the log-std row of the output layer starts at zero so
    /// the initial std is exactly 1 everywhere.
    pub fn new(env: &Environment, features: &[Feature], hidden: &[usize], rng: &mut StreamRng) -> Self {
        let features = FeatureMap::standard(env, features);
        let mut widths = vec![features.dim()];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let mut net = DenseNet::glorot(&widths, Activation::Tanh, rng);
        let last = widths.len() - 2;
        let fan_in = widths[last];
        let w = net.weight_range(last);
        for p in &mut net.params_mut()[w.start + fan_in..w.end] {
            *p = 0.0;
        }
        ActorNet { net, features }
    }

    pub fn from_net(net: DenseNet, features: FeatureMap) -> Self {
        assert_eq!(net.output_dim(), 2);
        assert_eq!(net.input_dim(), features.dim());
        ActorNet { net, features }
    }

    fn raw(&self, t: f64, state: &MarketState) -> (crate::nn::Tape, f64, f64) {
        let input = self.features.encode(t, state);
        let tape = self.net.forward_tape(&input).expect("feature map matches input width");
        let out = tape.output();
        let (mean, raw_log_std) = (out[0], out[1]);
        (tape, mean, raw_log_std)
    }

    /// Index range of the output-layer bias (mean, raw log-std).
    pub fn output_bias(&self) -> std::ops::Range<usize> {
        self.net.bias_range(self.net.widths().len() - 2)
    }

    pub fn sampling(&self) -> SampledActor<'_, Self> {
        SampledActor(self)
    }

    pub fn mean_only(&self) -> MeanActor<'_, Self> {
        MeanActor(self)
    }
}

impl GaussianActor for ActorNet {
    fn policy_at(&self, t: f64, state: &MarketState) -> GaussianPolicySpec {
        let (_, mean, s) = self.raw(t, state);
        GaussianPolicySpec { mean, std: s.clamp(LOG_STD_MIN, LOG_STD_MAX).exp() }
    }

    fn accumulate_score(&self, t: f64, state: &MarketState, v: f64, weight: f64, out: &mut [f64]) {
        let (tape, mean, s) = self.raw(t, state);
        let std = s.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
        let z = (v - mean) / std;
        let d_mean = z / std;
        // d log pi / d s = d log pi / d std * std = z^2 - 1, zero where clamped
        let d_s = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&s) { z * z - 1.0 } else { 0.0 };
        self.net
            .backward(&tape, &[d_mean, d_s], weight, Some(out))
            .expect("gradient buffer matches parameter count");
    }

    fn accumulate_mean_grad(&self, t: f64, state: &MarketState, weight: f64, out: &mut [f64]) {
        let (tape, _, _) = self.raw(t, state);
        self.net.backward(&tape, &[1.0, 0.0], weight, Some(out)).expect("gradient buffer matches parameter count");
    }

    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }
}

/// Samples actions from the actor's Gaussian.
pub struct SampledActor<'a, A: ?Sized>(pub &'a A);

impl<A: GaussianActor + ?Sized> Policy for SampledActor<'_, A> {
    fn act(&self, t: f64, state: &MarketState, rng: &mut StreamRng) -> Action {
        self.0.policy_at(t, state).sample(rng)
    }
}

/// Acts with the actor's mean only.
pub struct MeanActor<'a, A: ?Sized>(pub &'a A);

impl<A: GaussianActor + ?Sized> Policy for MeanActor<'_, A> {
    fn act(&self, t: f64, state: &MarketState, _rng: &mut StreamRng) -> Action {
        Action::deterministic(self.0.policy_at(t, state).mean)
    }
}

/// Convenience for checkpoint loading.
pub fn actor_from_parts(widths: &[usize], params: Vec<f64>, features: FeatureMap) -> Result<ActorNet> {
    Ok(ActorNet::from_net(DenseNet::from_params(widths, Activation::Tanh, params)?, features))
}
