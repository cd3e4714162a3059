//! Batch evaluation and configuration for the `ctg` command.

pub mod config;
pub mod eval;

pub use config::Config;
pub use eval::{
    evaluate, Confusion, EvalError, EvalOptions, EvalReport, RecordVerdict, Sampler, TrialReport,
};
