//! VWAP-targeting optimal execution: a jump-diffusion market simulator, the
//! closed-form exploratory optimum, and actor-critic learners.

pub mod closed_form;
pub mod critic;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod gaussian;
pub mod lab;
pub mod market;
pub mod nn;
pub mod params;
pub mod rng;
pub mod trainers;

pub use closed_form::{ClosedForm, ClosedFormPolicy, Coefficient};
pub use error::{Error, Result};
pub use exec::Exec;
pub use market::{Action, MarketState, Policy, StepRecord, Trajectory, Twap};
pub use params::{Environment, MarketParams, PenaltyParams, TimeGrid};
pub use rng::RunSeed;
