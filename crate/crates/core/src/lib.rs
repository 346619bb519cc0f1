//! Hybrid prediction of choice rates between two gambles.
//!
//! Behavioral features of each decision problem feed five block-wise
//! polynomial-kernel support-vector regressors; predictions are made block
//! by block and nudged by dominance and prospect-theory adjustments.

pub mod cli;
pub mod config;
pub mod data;
pub mod evaluation;
pub mod features;
mod io_util;
pub mod pipeline;
pub mod problem;
pub mod svr;
pub mod synthetic;

pub use data::{LabeledProblem, ProblemRecord};
pub use evaluation::{evaluate, msd, run_anomaly_suite, AnomalyCheck, EvalReport};
pub use features::{compute_features, effective_problem, CptParams, FeatureConfig, Features};
pub use pipeline::{cross_validate, predict_problem, train_bundle, BlockPrediction, ModelBundle, PipelineConfig};
pub use problem::{dist_a, dist_b, dominates, Block, Corr, Dominance, LotShape, OutcomeDistribution, Problem};
pub use svr::{KernelSpec, SvrModel, SvrParams};
