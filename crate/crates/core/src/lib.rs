//! Numerical laboratory for kernel approximations of the Brownian sheet.
//!
//! The crate builds random fields `X_n(x) = int_D f(x,y) theta_n(y) dy` from
//! Donsker and Kac-Stroock kernels, their Wiener-integral limits against a
//! simulated Brownian sheet, statistical diagnostics of the convergence in
//! law, and a mild-form solver for the stochastic Poisson equation on the
//! unit square and cube.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod green;
pub mod grid;
pub mod integrals;
pub mod kernels;
pub mod measure;
pub mod poisson;
pub mod report;
pub mod rng;
pub mod sheet;
pub mod stats;
pub mod tensor;

pub use diagnostics::{
    fdd_test, moment_bound_probe, tightness_modulus_probe, variance_convergence_report, DiagConfig,
};
pub use error::{Error, Result};
pub use green::{
    green_eval, green_l2_norm, green_mc_estimate, holder_probe, k_apply, lambda_sup,
    poincare_constant, GreenIntegrand, GreenSeries, HolderEstimate, WosConfig,
};
pub use grid::{leq, rectangle_increment, GridField, GridSpec, LatticePoint};
pub use integrals::{BoxIndicator, Driver, FnIntegrand, Integrand, NoiseFamily, QuadSpec};
pub use kernels::{DonskerField, InnovationLaw, KernelField, PoissonField};
pub use measure::PiecewiseMeasure;
pub use poisson::{
    psi_continuity_check, residual, solution_convergence_report, solve_contraction, solve_relaxed,
    spde_solution_sample, Nonlinearity, PoissonProblem, SolutionStudy, SolveConfig, SolveResult,
};
pub use report::{ConvergenceReport, Verdict};
pub use rng::RngStream;
pub use sheet::{sheet_covariance, wiener_integral, SheetSample};
