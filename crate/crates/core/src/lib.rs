//! Numerical laboratory for the no-sign obstacle problem
//! Δu = χ_Ω in B₁, Ω = B₁ \ {u = |Du| = 0}.
//!
//! The crate solves the discrete problem at desk scale, evaluates Monneau's
//! monotonicity functional along radii, fits quadratic blowups at candidate
//! singular points, tests blowup uniqueness across dyadic scales, and
//! mechanizes the eigenvalue-gap argument over spherical moments as an
//! executable decision procedure.
//!
//! Modules:
//! - [`quadratic_forms`]: the classes Q and Q⁺ of trace-1 quadratics, the
//!   diagonal pencil Bᵗ, and the replayed uniqueness argument.
//! - [`sphere`]: quadrature rules and exact degree-≤4 sphere moments.
//! - [`fields`]: grid-backed and analytic scalar fields, rescaling views,
//!   sphere sampling, discrete Laplacian, and the field file format.
//! - [`solver`]: projected SOR for the classical obstacle problem and the
//!   experimental no-sign fixed-point iteration.
//! - [`blowup`]: Monneau traces, annulus fits, uniqueness diagnostics, and
//!   singular/regular classification.

pub mod blowup;
pub mod fields;
pub mod io_util;
mod matrix;
pub mod quadratic_forms;
pub mod solver;
pub mod sphere;

pub use quadratic_forms::SymMatrix;
