//! Small dense feedforward network with exact parameter and input gradients.
//!
//! Parameters live in one flat vector. Layer `l` maps `fan_in -> fan_out` and
//! stores its weights row-major (`fan_out` rows of `fan_in`) followed by
//! `fan_out` biases, so the vector length is `sum (fan_in + 1) * fan_out`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketState;
use crate::params::Environment;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    widths: Vec<usize>,
    hidden: Activation,
    params: Vec<f64>,
}

/// Activations of every layer from one forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    layers: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("tape has an input layer")
    }
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl DenseNet {
    /// All parameters zero.
    pub fn zeros(widths: &[usize], hidden: Activation) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0), "need input and output widths");
        DenseNet { widths: widths.to_vec(), hidden, params: vec![0.0; param_count(widths)] }
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot(widths: &[usize], hidden: Activation, rng: &mut StreamRng) -> Self {
        let mut net = DenseNet::zeros(widths, hidden);
        let mut offset = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += (fan_in + 1) * fan_out;
        }
        net
    }

    pub fn from_params(widths: &[usize], hidden: Activation, params: Vec<f64>) -> Result<Self> {
        let expected = param_count(widths);
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: params.len() });
        }
        Ok(DenseNet { widths: widths.to_vec(), hidden, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Index range of the bias vector of layer `layer` (0-based).
    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let mut offset = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            let start = offset + w[0] * w[1];
            if l == layer {
                return start..start + w[1];
            }
            offset += (w[0] + 1) * w[1];
        }
        panic!("layer {layer} out of range");
    }

    /// Index range of the weight matrix of layer `layer`.
    pub fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let r = self.bias_range(layer);
        let w = &self.widths[layer..layer + 2];
        r.start - w[0] * w[1]..r.start
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: input.len() });
        }
        Ok(())
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<Tape> {
        self.check_input(input)?;
        let n_layers = self.widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let prev = layers.last().unwrap();
            let act = if l + 1 == n_layers { Activation::Identity } else { self.hidden };
            let out: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| act.apply(b + row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>()))
                .collect();
            layers.push(out);
            offset += (fan_in + 1) * fan_out;
        }
        Ok(Tape { layers })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_tape(input)?.layers.pop().unwrap())
    }

    /// Reverse pass for `upstream . output`. Adds `scale` times the parameter
    /// gradient into `param_grad` (when given) and returns the input gradient.
    pub fn backward(
        &self,
        tape: &Tape,
        upstream: &[f64],
        scale: f64,
        mut param_grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), found: upstream.len() });
        }
        if let Some(g) = param_grad.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::DimensionMismatch { expected: self.params.len(), found: g.len() });
            }
        }
        let n_layers = self.widths.len() - 1;
        // delta = d(upstream . out)/d(pre-activation) of the current layer
        let mut delta: Vec<f64> = upstream.to_vec();
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let start = end - (fan_in + 1) * fan_out;
            let weights = &self.params[start..start + fan_in * fan_out];
            let prev = &tape.layers[l];
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, gb) = g[start..end].split_at_mut(fan_in * fan_out);
                for (j, d) in delta.iter().enumerate() {
                    let sd = scale * d;
                    if sd == 0.0 {
                        continue;
                    }
                    gb[j] += sd;
                    for (gwi, a) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(prev) {
                        *gwi += sd * a;
                    }
                }
            }
            let mut back = vec![0.0; fan_in];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (b, w) in back.iter_mut().zip(&weights[j * fan_in..(j + 1) * fan_in]) {
                    *b += d * w;
                }
            }
            if l > 0 {
                for (b, a) in back.iter_mut().zip(prev) {
                    *b *= self.hidden.slope(*a);
                }
            }
            delta = back;
            end = start;
        }
        Ok(delta)
    }

    /// Gradient of `upstream . output` with respect to the flat parameters.
    pub fn grad_params(&self, input: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let tape = self.forward_tape(input)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&tape, upstream, 1.0, Some(&mut grad))?;
        Ok(grad)
    }

    /// Gradient of the scalar output with respect to the input.
    pub fn grad_input(&self, input: &[f64]) -> Result<Vec<f64>> {
        if self.output_dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, found: self.output_dim() });
        }
        let tape = self.forward_tape(input)?;
        self.backward(&tape, &[1.0], 0.0, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Ascent,
    Descent,
}

/// `params += rate * grad` (ascent) or `params -= rate * grad` (descent).
pub fn sgd_step(params: &mut [f64], grad: &[f64], rate: f64, direction: Direction) -> Result<()> {
    if params.len() != grad.len() {
        return Err(Error::DimensionMismatch { expected: params.len(), found: grad.len() });
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::invalid("rate", "must be finite and non-negative"));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::non_finite(format!("gradient component {i}")));
    }
    let signed = match direction {
        Direction::Ascent => rate,
        Direction::Descent => -rate,
    };
    for (p, g) in params.iter_mut().zip(grad) {
        *p += signed * g;
    }
    Ok(())
}

/// Step decay: `initial * factor^(epoch / interval)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub factor: f64,
    pub interval: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { factor: 0.9, interval: 10 }
    }
}

impl LrSchedule {
    /// Multiplier `l(m)` for the 0-based epoch `m`.
    pub fn multiplier(&self, epoch: usize) -> f64 {
        self.factor.powi((epoch / self.interval.max(1)) as i32)
    }

    pub fn rate(&self, initial: f64, epoch: usize) -> f64 {
        initial * self.multiplier(epoch)
    }
}

/// State coordinates a network may see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Time,
    Price,
    Cash,
    Inventory,
    Speed,
}

/// Fixed affine standardization `(value - offset) / scale` per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub features: Vec<Feature>,
    pub offsets: Vec<f64>,
    pub scales: Vec<f64>,
}

impl FeatureMap {
    /// Scales `t/T, S/s0, X/(s0 q0), Q/q0, mu/mu0` for the requested features.
    pub fn standard(env: &Environment, features: &[Feature]) -> Self {
        let m = env.market();
        let nonzero = |v: f64| if v.abs() > 0.0 { v.abs() } else { 1.0 };
        let scales = features
            .iter()
            .map(|f| match f {
                Feature::Time => env.grid().t_end,
                Feature::Price => nonzero(m.s0),
                Feature::Cash => nonzero(m.s0 * m.q0),
                Feature::Inventory => nonzero(m.q0),
                Feature::Speed => nonzero(m.mu0),
            })
            .collect();
        FeatureMap { features: features.to_vec(), offsets: vec![0.0; features.len()], scales }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    fn raw(feature: Feature, t: f64, state: &MarketState) -> f64 {
        match feature {
            Feature::Time => t,
            Feature::Price => state.s,
            Feature::Cash => state.x,
            Feature::Inventory => state.q,
            Feature::Speed => state.mu,
        }
    }

    pub fn encode(&self, t: f64, state: &MarketState) -> Vec<f64> {
        self.features
            .iter()
            .zip(self.offsets.iter().zip(&self.scales))
            .map(|(&f, (o, s))| (FeatureMap::raw(f, t, state) - o) / s)
            .collect()
    }

    /// Chain a gradient w.r.t. the encoded input back to raw state coordinates.
    pub fn decode_gradient(&self, encoded: &[f64]) -> StateGradient {
        let mut g = StateGradient::default();
        for ((f, s), d) in self.features.iter().zip(&self.scales).zip(encoded) {
            let raw = d / s;
            match f {
                Feature::Time => g.t += raw,
                Feature::Price => g.s += raw,
                Feature::Cash => g.x += raw,
                Feature::Inventory => g.q += raw,
                Feature::Speed => g.mu += raw,
            }
        }
        g
    }
}

/// Partial derivatives of a scalar function of `(t, S, X, Q, mu)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateGradient {
    pub t: f64,
    pub s: f64,
    pub x: f64,
    pub q: f64,
    pub mu: f64,
}

pub const ALL_FEATURES: [Feature; 5] =
    [Feature::Time, Feature::Price, Feature::Cash, Feature::Inventory, Feature::Speed];

/// Inputs the trainers use by default. Price and cash enter the value
/// through the book-value baseline instead.
pub const DEFAULT_FEATURES: [Feature; 3] = [Feature::Time, Feature::Inventory, Feature::Speed];
