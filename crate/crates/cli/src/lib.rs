//! Experiment harness around `dsmc-core`: the Cox, theta-logistic and
//! constrained random-walk models, their test functionals, configuration,
//! replicate execution and CSV output.

pub mod config;
pub mod data;
pub mod experiment;
pub mod functionals;
pub mod gibbs;
pub mod models;
pub mod output;
pub mod stats;

pub use config::{ExperimentConfig, ExperimentKind, Method, ResamplerChoice};
pub use experiment::{prepare, run_experiment, Prepared};
pub use output::ResultRow;
