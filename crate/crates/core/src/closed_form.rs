//! Closed-form solution of the exploratory liquidation problem.
//!
//! With the ansatz `V = x + q S + w0(t, mu) + w1(t, mu) q + w2(t) q^2` and
//! `w1 = l0(t) + l1(t) mu`, the coefficient functions are
//!
//! ```text
//! zeta = (k + phi) / (alpha - b/2)
//! w2   = -((T - t)/(k + phi) + 1/(alpha - b/2))^-1 - b/2
//! l1   = 2 phi rho ((T - t) + zeta)^-1 (1 - e^{-kappa (T-t)}) / kappa
//! l0   = 2 phi rho lambda eta ((T - t) + zeta)^-1 (e^{-kappa (T-t)} - 1 + kappa (T-t)) / kappa^2
//! ```
//!
//! and the optimal exploratory policy is Gaussian with mean
//! `(-w1 - 2 w2 q - b q + 2 phi rho mu) / (2 (phi + k))` and variance
//! `gamma / (2 (phi + k))`. The mean coincides with the deterministic
//! optimal speed; `w0` never enters the policy and is not computed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianPolicySpec;
use crate::market::{Action, MarketState, Policy};
use crate::params::Environment;
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    W2,
    L1,
    L0,
}

#[derive(Clone, Copy, Debug)]
pub struct ClosedForm {
    env: Environment,
}

impl ClosedForm {
    pub fn new(env: &Environment) -> Result<Self> {
        let m = env.market();
        if m.alpha <= m.b / 2.0 {
            return Err(Error::Domain { alpha: m.alpha, half_b: m.b / 2.0 });
        }
        Ok(ClosedForm { env: *env })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    fn impact_sum(&self) -> f64 {
        self.env.market().k + self.env.penalty().phi
    }

    pub fn zeta(&self) -> f64 {
        let m = self.env.market();
        self.impact_sum() / (m.alpha - m.b / 2.0)
    }

    fn remaining(&self, t: f64) -> f64 {
        self.env.grid().t_end - t
    }

    pub fn w2(&self, t: f64) -> f64 {
        let m = self.env.market();
        -1.0 / (self.remaining(t) / self.impact_sum() + 1.0 / (m.alpha - m.b / 2.0)) - m.b / 2.0
    }

    pub fn l1(&self, t: f64) -> f64 {
        let p = self.env.penalty();
        let kappa = self.env.market().kappa;
        let tau = self.remaining(t);
        2.0 * p.phi * p.rho / (tau + self.zeta()) * (-(-kappa * tau).exp_m1()) / kappa
    }

    pub fn l0(&self, t: f64) -> f64 {
        let p = self.env.penalty();
        let m = self.env.market();
        let tau = self.remaining(t);
        let kt = m.kappa * tau;
        2.0 * p.phi * p.rho * m.lambda * m.eta_mean / (tau + self.zeta()) * ((-kt).exp_m1() + kt)
            / (m.kappa * m.kappa)
    }

    pub fn w1(&self, t: f64, mu: f64) -> f64 {
        self.l0(t) + self.l1(t) * mu
    }

    pub fn coefficient(&self, which: Coefficient, t: f64) -> f64 {
        match which {
            Coefficient::W2 => self.w2(t),
            Coefficient::L1 => self.l1(t),
            Coefficient::L0 => self.l0(t),
        }
    }

    /// Deterministic optimal speed
    /// `(1/(k+phi)) {[phi rho mu - w1/2] - [b/2 + w2] q}`.
    pub fn optimal_speed(&self, t: f64, state: &MarketState) -> f64 {
        let b = self.env.market().b;
        let p = self.env.penalty();
        ((p.phi * p.rho * state.mu - 0.5 * self.w1(t, state.mu)) - (0.5 * b + self.w2(t)) * state.q)
            / self.impact_sum()
    }

    pub fn exploratory_std(&self) -> f64 {
        (self.env.penalty().gamma / (2.0 * self.impact_sum())).sqrt()
    }

    pub fn optimal_exploratory_policy(&self, t: f64, state: &MarketState) -> GaussianPolicySpec {
        let b = self.env.market().b;
        let p = self.env.penalty();
        let mean = (-self.w1(t, state.mu) - 2.0 * self.w2(t) * state.q - b * state.q
            + 2.0 * p.phi * p.rho * state.mu)
            / (2.0 * self.impact_sum());
        GaussianPolicySpec { mean, std: self.exploratory_std() }
    }

    pub fn twap_speed(&self) -> f64 {
        self.env.market().q0 / self.env.grid().t_end
    }

    /// Residual of the coefficient ODE at `t`, with the time derivative
    /// taken by a central difference of half-width `delta`:
    ///
    /// ```text
    /// w2: dw2/dt + (w2 + b/2)^2 / (k + phi)
    /// l1: dl1/dt - kappa l1 + (l1 - 2 phi rho)(w2 + b/2) / (k + phi)
    /// l0: dl0/dt + (w2 + b/2)/(k + phi) l0 + lambda eta l1
    /// ```
    pub fn coeff_ode_residual(&self, t: f64, which: Coefficient, delta: f64) -> f64 {
        let m = self.env.market();
        let p = self.env.penalty();
        let dt = (self.coefficient(which, t + delta) - self.coefficient(which, t - delta)) / (2.0 * delta);
        let drift = (self.w2(t) + 0.5 * m.b) / self.impact_sum();
        match which {
            Coefficient::W2 => dt + (self.w2(t) + 0.5 * m.b).powi(2) / self.impact_sum(),
            Coefficient::L1 => dt - m.kappa * self.l1(t) + (self.l1(t) - 2.0 * p.phi * p.rho) * drift,
            Coefficient::L0 => dt + drift * self.l0(t) + m.lambda * m.eta_mean * self.l1(t),
        }
    }

    /// Default finite-difference half-width, `1e-5 T`.
    pub fn residual_delta(&self) -> f64 {
        1e-5 * self.env.grid().t_end
    }

    pub fn policy(&self, exploratory: bool) -> ClosedFormPolicy {
        ClosedFormPolicy { cf: *self, exploratory }
    }
}

/// Acts with the closed-form optimum: sampled from the Gaussian when
/// `exploratory`, the deterministic speed otherwise.
#[derive(Clone, Copy, Debug)]
pub struct ClosedFormPolicy {
    pub cf: ClosedForm,
    pub exploratory: bool,
}

impl Policy for ClosedFormPolicy {
    fn act(&self, t: f64, state: &MarketState, rng: &mut StreamRng) -> Action {
        if self.exploratory {
            self.cf.optimal_exploratory_policy(t, state).sample(rng)
        } else {
            Action::deterministic(self.cf.optimal_speed(t, state))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{MarketParams, PenaltyParams};

    fn state(q: f64, mu: f64) -> MarketState {
        MarketState { s: 20.0, x: 0.0, q, mu, t_index: 0 }
    }

    // Values from a 40-digit evaluation of the same formulas.
    #[allow(clippy::excessive_precision)]
    const ENV1_T0: (f64, f64, f64, f64) =
        (-0.24960059910134797803, 0.00019960059868994048015, 0.094810284583425477013, 1.2480029955067398902);
    #[allow(clippy::excessive_precision)]
    const ENV2_T0: (f64, f64, f64, f64) =
        (-5.3055555555555555556, 0.0096296296097814836358, 4.5740740745702777239, 0.8487654320987654321);
    #[allow(clippy::excessive_precision)]
    const ENV2_T09: (f64, f64, f64, f64) =
        (-9.1715686274509803922, 0.014693648781600045759, 0.482331983074377941, 1.4978213507625272331);

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn matches_high_precision_oracle() {
        for (env, t, (w2, l1, l0, v)) in [
            (Environment::env1(), 0.0, ENV1_T0),
            (Environment::env2(), 0.0, ENV2_T0),
            (Environment::env2(), 0.9, ENV2_T09),
        ] {
            let cf = ClosedForm::new(&env).unwrap();
            assert!(close(cf.w2(t), w2), "w2 {} vs {w2}", cf.w2(t));
            assert!(close(cf.l1(t), l1), "l1 {} vs {l1}", cf.l1(t));
            assert!(close(cf.l0(t), l0), "l0 {} vs {l0}", cf.l0(t));
            let speed = cf.optimal_speed(t, &state(1.25, 25.0));
            assert!(close(speed, v), "v* {speed} vs {v}");
        }
    }

    #[test]
    fn terminal_conditions() {
        for env in [Environment::env1(), Environment::env2()] {
            let cf = ClosedForm::new(&env).unwrap();
            assert!((cf.w2(1.0) + env.market().alpha).abs() < 1e-12);
            assert_eq!(cf.l1(1.0), 0.0);
            assert_eq!(cf.l0(1.0), 0.0);
            assert!(cf.zeta() > 0.0);
        }
    }

    #[test]
    fn zero_rho_removes_tracking_terms() {
        let env = Environment::env2();
        let env = env.with_penalty(PenaltyParams { rho: 0.0, ..*env.penalty() }).unwrap();
        let cf = ClosedForm::new(&env).unwrap();
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            assert_eq!(cf.l1(t), 0.0);
            assert_eq!(cf.l0(t), 0.0);
            let v = cf.optimal_speed(t, &state(1.25, 25.0));
            let twap_like = 1.25 / ((1.0 - t) + cf.zeta());
            assert!((v - twap_like).abs() < 1e-12, "{v} vs {twap_like}");
            assert_eq!(cf.optimal_speed(t, &state(0.0, 25.0)), 0.0);
            assert_eq!(cf.coeff_ode_residual(t.clamp(0.1, 0.9), Coefficient::L1, 1e-5), 0.0);
            assert_eq!(cf.coeff_ode_residual(t.clamp(0.1, 0.9), Coefficient::L0, 1e-5), 0.0);
        }
    }

    #[test]
    fn exploratory_std_env1() {
        let cf = ClosedForm::new(&Environment::env1()).unwrap();
        assert!((cf.exploratory_std() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_gamma_is_dirac_at_optimal_speed() {
        let env = Environment::env1();
        let env = env.with_penalty(PenaltyParams { gamma: 0.0, ..*env.penalty() }).unwrap();
        let cf = ClosedForm::new(&env).unwrap();
        let s = state(0.7, 31.0);
        let spec = cf.optimal_exploratory_policy(0.4, &s);
        assert_eq!(spec.std, 0.0);
        assert!((spec.mean - cf.optimal_speed(0.4, &s)).abs() < 1e-12);
    }

    #[test]
    fn twap_speed_values() {
        let cf = ClosedForm::new(&Environment::env1()).unwrap();
        assert_eq!(cf.twap_speed(), 1.25);
        let env = Environment::env1();
        let flat = env.with_market(MarketParams { q0: 0.0, ..*env.market() }).unwrap();
        assert_eq!(ClosedForm::new(&flat).unwrap().twap_speed(), 0.0);
    }

    #[test]
    fn w2_decreases_towards_minus_alpha() {
        for env in [Environment::env1(), Environment::env2()] {
            let cf = ClosedForm::new(&env).unwrap();
            let mut prev = cf.w2(0.0);
            for i in 1..=100 {
                let w = cf.w2(i as f64 / 100.0);
                assert!(w < prev, "w2 must move towards -alpha");
                prev = w;
            }
        }
    }

    #[test]
    fn rejects_alpha_at_half_b() {
        // bypass Environment validation through a hand-built market
        let env = Environment::env1();
        let m = MarketParams { alpha: 0.05, ..*env.market() };
        assert!(env.with_market(m).is_err());
    }
}
