//! Benchmark harness: generate instances, run a solver over several
//! trials, measure rounded gaps against the exact optimum, and write trace
//! CSVs plus a mean-curve summary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;

pub use config::{AlgorithmSpec, Budget, CadenceSpec, ExtragradMode, GeneratorSpec, OracleSpec, RunConfig};
pub use error::{BenchError, Result};
pub use harness::{compare, generate, instance_seed, run, run_trial, run_trials, Report, Summary, TrialResult};
