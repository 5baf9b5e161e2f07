//! Discrete optimal transport solvers.
//!
//! The centerpiece is an entropy-regularized extragradient method on the
//! bilinear minimax form of the l1-penalized transport problem
//! ([`extragrad`]). Around it sit the rounding step that restores exact
//! marginals ([`rounding`]), Sinkhorn and Greenkhorn baselines
//! ([`baselines`]), an exact network simplex oracle for small problems
//! ([`oracle`]), and the benchmark instance generators ([`instances`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod extragrad;
pub mod instances;
pub mod numeric;
pub mod oracle;
pub mod problem;
pub mod rounding;
pub mod trace;

pub use error::{OtError, Result};
pub use problem::{
    eval_f, eval_regularized, marginal_violation, penalized_objective, transport_cost, DualIterate, OtInstance,
    TransportPlan,
};
pub use rounding::{round_to_feasible, RoundingReport};
pub use trace::{Cadence, TraceOptions, TraceRecord};
