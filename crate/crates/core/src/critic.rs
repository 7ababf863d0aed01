//! Value-function approximators used as critics.

use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedForm;
use crate::error::{Error, Result};
use crate::market::MarketState;
use crate::nn::{Activation, DenseNet, Feature, FeatureMap, StateGradient};
use crate::params::Environment;
use crate::rng::StreamRng;

/// A scalar value estimate `V(t, Y)` with a parameter gradient.
pub trait Critic {
    fn value(&self, t: f64, state: &MarketState) -> f64;

    /// Adds `weight * dV/dparams` into `out`.
    fn accumulate_grad(&self, t: f64, state: &MarketState, weight: f64, out: &mut [f64]);

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

/// A critic that also exposes `dV/d(t, S, X, Q, mu)`.
pub trait DifferentiableCritic: Critic {
    fn state_gradient(&self, t: f64, state: &MarketState) -> StateGradient;
}

/// `V = [x + q S] + scale * net(features)`.
///
/// With the bracketed mark-to-market baseline switched on, the network only
/// learns the correction to the book value of the position. `scale` is the
/// initial book value `s0 q0` so the network output is of order one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub net: DenseNet,
    pub features: FeatureMap,
    pub baseline: bool,
    pub output_scale: f64,
}

impl ValueNet {
    /// Glorot hidden layers, zero output layer: the initial value is the
    /// baseline alone (or zero without it).
    pub fn new(
        env: &Environment,
        features: &[Feature],
        hidden: &[usize],
        baseline: bool,
        rng: &mut StreamRng,
    ) -> Self {
        let features = FeatureMap::standard(env, features);
        let mut widths = vec![features.dim()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut net = DenseNet::glorot(&widths, Activation::Tanh, rng);
        let last = widths.len() - 2;
        let w = net.weight_range(last);
        let b = net.bias_range(last);
        for p in &mut net.params_mut()[w.start..b.end] {
            *p = 0.0;
        }
        let m = env.market();
        let scale = (m.s0 * m.q0).abs();
        ValueNet { net, features, baseline, output_scale: if scale > 0.0 { scale } else { 1.0 } }
    }

    pub fn from_parts(net: DenseNet, features: FeatureMap, baseline: bool, output_scale: f64) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: net.output_dim() });
        }
        if net.input_dim() != features.dim() {
            return Err(Error::DimensionMismatch { expected: features.dim(), found: net.input_dim() });
        }
        Ok(ValueNet { net, features, baseline, output_scale })
    }

    fn book(&self, state: &MarketState) -> f64 {
        if self.baseline {
            state.x + state.q * state.s
        } else {
            0.0
        }
    }
}

impl Critic for ValueNet {
    fn value(&self, t: f64, state: &MarketState) -> f64 {
        let input = self.features.encode(t, state);
        let out = self.net.forward(&input).expect("feature map matches input width");
        self.book(state) + self.output_scale * out[0]
    }

    fn accumulate_grad(&self, t: f64, state: &MarketState, weight: f64, out: &mut [f64]) {
        let input = self.features.encode(t, state);
        let tape = self.net.forward_tape(&input).expect("feature map matches input width");
        self.net
            .backward(&tape, &[self.output_scale], weight, Some(out))
            .expect("gradient buffer matches parameter count");
    }

    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }
}

impl DifferentiableCritic for ValueNet {
    fn state_gradient(&self, t: f64, state: &MarketState) -> StateGradient {
        let input = self.features.encode(t, state);
        let tape = self.net.forward_tape(&input).expect("feature map matches input width");
        let encoded = self.net.backward(&tape, &[self.output_scale], 1.0, None).expect("scalar output");
        let mut g = self.features.decode_gradient(&encoded);
        if self.baseline {
            g.x += 1.0;
            g.q += state.s;
            g.s += state.q;
        }
        g
    }
}

/// One free value per grid node, indexed by `state.t_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularCritic {
    pub values: Vec<f64>,
}

impl TabularCritic {
    pub fn zeros(n_steps: usize) -> Self {
        TabularCritic { values: vec![0.0; n_steps + 1] }
    }
}

impl Critic for TabularCritic {
    fn value(&self, _t: f64, state: &MarketState) -> f64 {
        self.values[state.t_index]
    }

    fn accumulate_grad(&self, _t: f64, state: &MarketState, weight: f64, out: &mut [f64]) {
        out[state.t_index] += weight;
    }

    fn params(&self) -> &[f64] {
        &self.values
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// The closed-form value without its `w0` term:
/// `x + q S + w1(t, mu) q + w2(t) q^2`. Parameter-free.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateValue {
    pub cf: ClosedForm,
}

impl Critic for SurrogateValue {
    fn value(&self, t: f64, state: &MarketState) -> f64 {
        let q = state.q;
        state.x + q * state.s + self.cf.w1(t, state.mu) * q + self.cf.w2(t) * q * q
    }

    fn accumulate_grad(&self, _t: f64, _state: &MarketState, _weight: f64, _out: &mut [f64]) {}

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }
}

impl DifferentiableCritic for SurrogateValue {
    fn state_gradient(&self, t: f64, state: &MarketState) -> StateGradient {
        let q = state.q;
        let delta = self.cf.residual_delta();
        let dt = (self.value(t + delta, state) - self.value(t - delta, state)) / (2.0 * delta);
        StateGradient {
            t: dt,
            s: q,
            x: 1.0,
            q: state.s + self.cf.w1(t, state.mu) + 2.0 * self.cf.w2(t) * q,
            mu: self.cf.l1(t) * q,
        }
    }
}
