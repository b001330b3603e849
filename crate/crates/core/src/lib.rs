//! Ground states of the discrete Gross-Pitaevskii energy
//!
//! `E(u) = 1/2 |grad u|^2 + 1/2 V u^2 + beta/4 u^4` on the unit L2 sphere,
//! computed with projected Sobolev gradient descent in the H1, a0 and a_u
//! inner products on finite-difference box grids.
//!
//! ```
//! use std::sync::Arc;
//! use gpflow_core::{run, Grid, Problem, RunConfig, SchemeKind};
//!
//! let grid = Arc::new(Grid::unit(1, 63).unwrap());
//! let problem = Problem::free(grid, 10.0).unwrap();
//! let report = run(&problem, &RunConfig::new(SchemeKind::Au)).unwrap();
//! assert!(report.converged());
//! ```

pub mod energy;
pub mod error;
pub mod flows;
pub mod greens;
pub mod grid;
pub mod potential;
pub mod random;
pub mod spectral;
pub mod verify;

pub use energy::{
    energy, energy_change, gamma, metric_gradient, project_tangent, retract, riemannian_gradient, split_gradient,
    GradientSplit, Problem, SchemeKind, MANIFOLD_TOL,
};
pub use error::{Error, Result};
pub use flows::{
    backtrack, h1_distances, initial_guess, run, sign_normalize, step, ConvergenceReport, Init, IterationRecord,
    LineSearch, RunConfig, Status, StepMode, StepPolicy,
};
pub use greens::{conjugate_gradient, solve_green, solve_green_from, LinearOperator, Preconditioner, SolverConfig};
pub use grid::{apply_neg_laplacian, inner, inner_l2, norm, norm_l2, Grid, GridFunction, Metric, MetricKind};
pub use potential::Potential;
pub use spectral::{
    estimate_poincare, fit_rate, gap_factor, linearized_operator, linearized_spectrum, lowest_two_eigen, EigenMethod,
    RateFit, SpectralReport,
};
pub use verify::{agreement, check_suite, cross_scheme_agreement, CheckResult, CHECK_NAMES};
