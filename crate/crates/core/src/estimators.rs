//! Maximum-likelihood estimates of the impact parameters.
//!
//! With `S_{i+1} - S_i = -b v_i h + sigma sqrt(h) Z`, maximizing the
//! Gaussian likelihood in `b` gives
//!
//! ```text
//! b_hat = -sum (S_{i+1} - S_i) v_i / sum v_i^2 h
//! ```
//!
//! The temporary impact is observed exactly: `k = (S' - S_hat') / v` for
//! every step with `|v| > 1e-9`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Trajectory;

pub const MIN_SPEED: f64 = 1e-9;

/// Running sufficient statistics for `b_hat` and `k_hat`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactStats {
    pub sum_dsv: f64,
    pub sum_v2h: f64,
    pub sum_k: f64,
    pub k_count: usize,
    pub steps: usize,
}

impl ImpactStats {
    pub fn add(&mut self, traj: &Trajectory, h: f64) {
        for (i, step) in traj.steps.iter().enumerate() {
            let v = step.action;
            let next_s = traj.state(i + 1).s;
            self.sum_dsv += (next_s - step.state.s) * v;
            self.sum_v2h += v * v * h;
            if v.abs() > MIN_SPEED {
                self.sum_k += (next_s - step.exec_price) / v;
                self.k_count += 1;
            }
            self.steps += 1;
        }
    }

    pub fn from_batch(batch: &[Trajectory], h: f64) -> Self {
        let mut stats = ImpactStats::default();
        for traj in batch {
            stats.add(traj, h);
        }
        stats
    }

    pub fn b_hat(&self) -> Result<f64> {
        if self.sum_v2h == 0.0 {
            return Err(Error::EstimationUndefined("b_hat needs at least one nonzero action"));
        }
        Ok(-self.sum_dsv / self.sum_v2h)
    }

    pub fn k_hat(&self) -> Result<f64> {
        if self.k_count == 0 {
            return Err(Error::EstimationUndefined("k_hat needs a step with |v| > 1e-9"));
        }
        Ok(self.sum_k / self.k_count as f64)
    }

    /// Standard error of `b_hat` given the price volatility.
    pub fn b_standard_error(&self, sigma: f64) -> f64 {
        sigma / self.sum_v2h.sqrt()
    }
}

pub fn estimate_b(batch: &[Trajectory], h: f64) -> Result<f64> {
    ImpactStats::from_batch(batch, h).b_hat()
}

/// The estimator as printed without the leading minus sign. It returns
/// `-b` on noiseless data; kept only to document the sign.
pub fn estimate_b_unsigned(batch: &[Trajectory], h: f64) -> Result<f64> {
    estimate_b(batch, h).map(|b| -b)
}

pub fn estimate_k(batch: &[Trajectory], h: f64) -> Result<f64> {
    ImpactStats::from_batch(batch, h).k_hat()
}
