//! Model constants and the two reference environments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market dynamics and initial state.
///
/// `eta_mean` is the MEAN of the exponential jump size of the market speed,
/// so the stationary speed is `lambda * eta_mean / kappa`. With the reference
/// constants that is 50 * 10 / 20 = 25 = `mu0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub kappa: f64,
    pub lambda: f64,
    pub eta_mean: f64,
    /// Permanent impact.
    pub b: f64,
    /// Temporary impact.
    pub k: f64,
    /// Terminal inventory penalty.
    pub alpha: f64,
    pub sigma: f64,
    pub s0: f64,
    pub x0: f64,
    pub q0: f64,
    pub mu0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyParams {
    /// Speed-tracking penalty weight.
    pub phi: f64,
    /// Target fraction of the market speed.
    pub rho: f64,
    /// Exploration temperature.
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { t_end: 1.0, n_steps: 100 }
    }
}

impl TimeGrid {
    pub fn step(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.step()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be at least 1"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be positive and finite"));
        }
        Ok(())
    }
}

fn check(ok: bool, field: &'static str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(field, reason))
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("eta_mean", self.eta_mean),
            ("b", self.b),
            ("k", self.k),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("s0", self.s0),
            ("x0", self.x0),
            ("q0", self.q0),
            ("mu0", self.mu0),
        ];
        for (field, value) in all {
            check(value.is_finite(), field, "must be finite")?;
        }
        check(self.kappa > 0.0, "kappa", "must be > 0")?;
        check(self.lambda >= 0.0, "lambda", "must be >= 0")?;
        check(self.eta_mean > 0.0, "eta_mean", "must be > 0")?;
        check(self.b >= 0.0, "b", "must be >= 0")?;
        check(self.k >= 0.0, "k", "must be >= 0")?;
        check(self.alpha > self.b / 2.0, "alpha", "must exceed b/2")?;
        check(self.sigma >= 0.0, "sigma", "must be >= 0")?;
        check(self.mu0 >= 0.0, "mu0", "must be >= 0")?;
        Ok(())
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        check(self.phi.is_finite() && self.phi > 0.0, "phi", "must be > 0")?;
        check(self.rho.is_finite() && self.rho >= 0.0, "rho", "must be >= 0")?;
        check(self.gamma.is_finite() && self.gamma >= 0.0, "gamma", "must be >= 0")?;
        Ok(())
    }
}

/// A validated (market, penalty, grid) triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentSpec", into = "EnvironmentSpec")]
pub struct Environment {
    market: MarketParams,
    penalty: PenaltyParams,
    grid: TimeGrid,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub market: MarketParams,
    pub penalty: PenaltyParams,
    #[serde(default)]
    pub grid: TimeGrid,
}

impl TryFrom<EnvironmentSpec> for Environment {
    type Error = Error;
    fn try_from(spec: EnvironmentSpec) -> Result<Self> {
        Environment::new(spec.market, spec.penalty, spec.grid)
    }
}

impl From<Environment> for EnvironmentSpec {
    fn from(env: Environment) -> Self {
        EnvironmentSpec { market: env.market, penalty: env.penalty, grid: env.grid }
    }
}

impl Environment {
    pub fn new(market: MarketParams, penalty: PenaltyParams, grid: TimeGrid) -> Result<Self> {
        market.validate()?;
        penalty.validate()?;
        grid.validate()?;
        if market.kappa * grid.step() >= 1.0 {
            return Err(Error::invalid("kappa", "kappa * h must be < 1 for the explicit decay step"));
        }
        Ok(Environment { market, penalty, grid })
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn penalty(&self) -> &PenaltyParams {
        &self.penalty
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn with_market(&self, market: MarketParams) -> Result<Self> {
        Environment::new(market, self.penalty, self.grid)
    }

    pub fn with_penalty(&self, penalty: PenaltyParams) -> Result<Self> {
        Environment::new(self.market, penalty, self.grid)
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Result<Self> {
        Environment::new(self.market, self.penalty, grid)
    }

    /// Small impacts, mild tracking penalty, heavy terminal penalty.
    pub fn env1() -> Self {
        let market = MarketParams {
            kappa: 20.0,
            lambda: 50.0,
            eta_mean: 10.0,
            b: 0.1,
            k: 0.1,
            alpha: 100.0,
            sigma: 0.5,
            s0: 20.0,
            x0: 0.0,
            q0: 1.25,
            mu0: 25.0,
        };
        let penalty = PenaltyParams { phi: 0.1, rho: 0.02, gamma: 0.001 };
        Environment::new(market, penalty, TimeGrid::default()).expect("env1 preset is valid")
    }

    /// Strong impacts and tracking penalty, light terminal penalty.
    pub fn env2() -> Self {
        let base = Environment::env1();
        let market = MarketParams { b: 0.5, k: 0.5, alpha: 10.0, ..base.market };
        let penalty = PenaltyParams { phi: 10.0, ..base.penalty };
        Environment::new(market, penalty, TimeGrid::default()).expect("env2 preset is valid")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "env1" => Some(Environment::env1()),
            "env2" => Some(Environment::env2()),
            _ => None,
        }
    }

    /// Stationary mean of the market speed, `lambda * eta_mean / kappa`.
    pub fn stationary_speed(&self) -> f64 {
        self.market.lambda * self.market.eta_mean / self.market.kappa
    }

    /// Analytic `E[mu_t]` of the continuous-time jump process.
    pub fn mean_speed(&self, t: f64) -> f64 {
        let m = &self.market;
        let decay = (-m.kappa * t).exp();
        m.mu0 * decay + self.stationary_speed() * (1.0 - decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_reference_tables() {
        let e1 = Environment::env1();
        let m = e1.market();
        let p = e1.penalty();
        assert_eq!(
            (m.s0, m.q0, m.x0, m.mu0, m.b, m.k, p.phi),
            (20.0, 1.25, 0.0, 25.0, 0.1, 0.1, 0.1)
        );
        assert_eq!(
            (m.sigma, m.alpha, p.rho, m.lambda, m.eta_mean, m.kappa, p.gamma),
            (0.5, 100.0, 0.02, 50.0, 10.0, 20.0, 0.001)
        );
        let e2 = Environment::env2();
        assert_eq!((e2.market().b, e2.market().k, e2.penalty().phi, e2.market().alpha), (0.5, 0.5, 10.0, 10.0));
        assert_eq!(e2.market().sigma, 0.5);
        assert_eq!(e2.market().mu0, 25.0);
        assert_eq!(e1.stationary_speed(), 25.0);
        assert_eq!(e2.grid().n_steps, 100);
    }

    #[test]
    fn rejects_alpha_below_half_b() {
        let env = Environment::env1();
        let bad = MarketParams { alpha: 0.04, ..*env.market() };
        match env.with_market(bad) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "alpha"),
            other => panic!("expected alpha rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unstable_decay_step() {
        let env = Environment::env1();
        let grid = TimeGrid { t_end: 1.0, n_steps: 20 };
        assert!(matches!(env.with_grid(grid), Err(Error::InvalidParameter { field: "kappa", .. })));
    }

    #[test]
    fn grid_step_times_count_is_horizon() {
        let grid = TimeGrid { t_end: 1.0, n_steps: 100 };
        assert!((grid.step() * grid.n_steps as f64 - grid.t_end).abs() < 1e-15);
        assert_eq!(grid.time(0), 0.0);
        assert!((grid.time(50) - 0.5).abs() < 1e-15);
    }
}
