//! `homolab` is a desk-scale laboratory for quantitative stochastic
//! homogenization of nondivergence-form operators `u ↦ tr(A(x) D²u)`.
//!
//! The crate is organized along the pipeline:
//!
//! - [`field`]: stationary random coefficient fields with unit-scale finite
//!   range of dependence, driven by a stateless counter-based generator.
//! - [`grid`], [`operator`], [`solver`], [`parabolic`]: the monotone
//!   finite-difference discretization, sparse iterative solves and explicit /
//!   implicit parabolic stepping with a discrete maximum principle.
//! - [`green`]: discrete parabolic Green functions, their mass, the invariant
//!   density as limiting mass, Gaussian envelope fits and CLT deviations.
//! - [`adjoint`]: the adjoint (doubly-divergence) equation `L*m = 0`,
//!   torus null vectors, the radial power-law example and integrability
//!   diagnostics.
//! - [`homogenize`]: effective matrix estimation by approximate correctors and
//!   by measure averages, Dirichlet correctors and Cauchy–Dirichlet error
//!   experiments.
//! - [`clt`]: quenched local CLT runs, the conserved functional and the
//!   multiscale flatness seminorm.
//! - [`diffusion`]: Euler–Maruyama paths and ergodicity of the environment
//!   seen from the particle.
//! - [`harness`]: configuration, persistence, manifests and reports.

pub mod adjoint;
pub mod clt;
pub mod diffusion;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod green;
pub mod grid;
pub mod harness;
pub mod homogenize;
pub mod operator;
pub mod parabolic;
pub mod rate;
pub mod rng;
pub mod solver;
pub mod sym;

pub use error::{Error, Result};
pub use field::{
    CellLaw, CoefficientField, Coefficients, EllipticityParams, FieldDescriptor, Interpolation,
    Topology,
};
pub use grid::Grid;
pub use operator::GridOperator;
pub use rate::{fit_rate, FitWindow, RateTable};
pub use sym::SymMat;
