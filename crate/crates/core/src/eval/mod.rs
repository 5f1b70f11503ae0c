//! Evaluation: metrics, protocol runs, cross-validation, significance
//! tests, hyperparameter sweeps and gradient checking.

pub mod gradcheck;
pub mod grid;
pub mod metrics;
pub mod protocol;
pub mod results;
pub mod stats;

pub use gradcheck::{gradcheck, GradcheckReport};
pub use grid::{grid_search, tune_lambda, tune_two_stage, GridOutcome, Grids, SweepRow, TwoStage};
pub use metrics::{relative_improvement, rmse};
pub use protocol::{
    cross_validate, evaluate_split, run_protocol, train_variant, ExperimentResult, Protocol, TrainedModel,
};
pub use results::{compare, comparison_tsv, ComparisonRow, Provenance, ResultsFile};
pub use stats::{paired_t_test, TTest};
