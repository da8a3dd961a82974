//! The training loop: rollout, scoring, advantages, exploration injection,
//! policy update, logging, evaluation and checkpointing.

mod config;
mod diagnostic;
mod eval;
mod metrics;
mod train;
mod warmstart;

pub use config::{DataConfig, ExploreConfig, PolicyConfig, RunConfig, TrainConfig};
pub use diagnostic::{exploration_diagnostic, ols_slope, DiagnosticReport, RunSlope};
pub use eval::{evaluate, metrics_from_correctness, sample_correctness, EvalMetrics};
pub use metrics::{read_log, write_log, MetricRow};
pub use train::{initial_policy, train, train_with, StepView, TrainOutput, TrainOptions};
pub use warmstart::{demonstration, warm_start, WarmStartConfig};
