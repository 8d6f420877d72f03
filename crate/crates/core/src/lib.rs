//! Sample-efficient linear programming when some LP parameters can only be
//! observed through noisy samples.
//!
//! Two settings are covered:
//!
//! * unknown constraint right-hand side `b`: [`ucb_ellipsoid`] runs the
//!   ellipsoid method with a UCB-style feasibility check, compared against the
//!   [`baselines`];
//! * unknown objective `c`: [`succ_elim`] eliminates extreme points round by
//!   round, with sample allocations from [`tau_solver`].
//!
//! [`harness`] generates random instances and aggregates seeded trials.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod ellipsoid;
pub mod error;
pub mod harness;
pub mod lp_model;
pub mod report;
pub mod sampling;
pub mod succ_elim;
pub mod tau_solver;
pub mod ucb_ellipsoid;
pub mod vertex_enum;

pub use error::{Error, Result};
pub use lp_model::{InstanceFile, LinearProgram, LpInstance, SigmaSpec, Solution, ToleranceParams, UnknownSet};
pub use report::{AlgorithmId, AlgorithmOutput, RunReport};
pub use sampling::{NoisyOracle, SampleLedger};
