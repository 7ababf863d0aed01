//! Learners: adaptive dynamic programming and the two martingale
//! actor-critic methods.

pub mod adp;
pub mod martingale;
pub mod policy_gradient;
mod train;

pub use adp::{
    adp_actor_update, adp_critic_gradient, adp_critic_loss, adp_critic_update, adp_exploratory_policy,
    adp_target, adp_targets, returns_to_go,
};
pub use martingale::{draw_test_function, ml_critic_delta, mo_critic_delta, mo_residual, CriticDelta};
pub use policy_gradient::{advantages, policy_delta, TerminalValue};
pub use train::{clip_norm, monitor, train, train_with, Agent, Algorithm, EpochAbort, EpochReport, TrainConfig, TrainOutcome};
