//! Configuration, evaluation and experiment outputs.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{load_config, parse_config, resolve_environment, AgentKind, ExperimentConfig, RunConfig};
pub use experiment::{
    load_checkpoint, read_results, run_experiment, save_checkpoint, write_heatmap, write_policy_table,
    ExperimentSummary, PolicyView, SeedError, SeedResult,
};
pub use metrics::{compare, delta_pnl, evaluate_policy, ComparisonReport, ComparisonRow, Evaluation, Summary};
