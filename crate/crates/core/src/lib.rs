//! Variational regularisation of linear inverse problems with proximal
//! solvers, and the experiments that measure how many solver iterations a
//! corruption level needs for the approximate solutions to converge.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linop;
pub mod par;
pub mod pgm;
pub mod prox;
pub mod rng;
pub mod schedules;
pub mod solvers;
pub mod vector;

/// Library version recorded in experiment sidecars.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use dense::{smallest_nonzero_eigenvalue, DenseMatrix};
pub use error::{Error, Result};
pub use linop::{
    estimate_norm, make_centring, make_gaussian_blur, make_grad2d, make_stack, FlatAreaCollection,
    GridDims, LinearMap, NormEstimate,
};
pub use prox::{bregman_divergence, sign_set_membership, Functional, FunctionalKind, GroupLayout, SubgradientChoice};
pub use solvers::{
    fb_accuracy_bound, forward_backward, forward_backward_observed, lagrangian_gap, m_norm_squared, pdps, pdps_accuracy_bound,
    pdps_observed, tikhonov_nonneg_solve, tikhonov_solve, IterationRecord, PrimalDualForm, ProblemSpec,
    SeparableSum, SolveTrace, StepParams,
};
pub use schedules::{alpha_of, check_convergence_conditions, gamma_of, iterated_log, n_of, AlphaRule, GammaRule, NRule, Schedule};
