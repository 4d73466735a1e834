//! Optimal generalized Nash equilibrium selection.
//!
//! The library computes a v-GNE of a monotone game with linear coupling
//! constraints that minimizes a convex selection function. The main solver
//! runs an outer Tikhonov loop over strongly monotone regularized problems,
//! each solved by a preconditioned forward-backward (pFB) inner loop that
//! converges linearly. Plain FBF and HSDM-FBF baselines, a brute-force QP
//! oracle and an experiment harness are included.

// Negated comparisons deliberately reject NaN parameters.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod document;
pub mod error;
pub mod game;
pub mod harness;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod precond;
pub mod tikhonov;
pub mod trace;

pub use document::GameDocument;
pub use error::{Error, Result};
pub use game::{
    validate_game, AgentSpec, BoxSet, CheckStatus, GameInstance, JointPoint, Pseudogradient, SelectionSpec,
    ValidationReport,
};
pub use operators::{project_omega, SplitOperators};
pub use precond::{NormSource, PreconditionerConfig, PreconditionerOptions, StepPolicy};
pub use tikhonov::{ScheduleParams, SolveOptions, StopRule};
pub use trace::{SolverTrace, TraceRow};
