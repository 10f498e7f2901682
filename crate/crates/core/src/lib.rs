//! Minimal nonnegative solutions of the nonsymmetric T-Riccati equation
//!
//! ```text
//! R(X) = D X + Xᵀ A − Xᵀ B X + C = 0
//! ```
//!
//! Dense solvers (fixed point, Newton with optional exact line search) live in
//! [`riccati_dense`]; the large-scale inexact Newton method with low-rank
//! iterates and an extended Krylov inner solver lives in [`inexact`].
//!
//! All matrices are column-major; `vec(X)` stacks the columns of `X`.

pub mod dense;
pub mod error;
pub mod inexact;
pub mod krylov;
pub mod linesearch;
pub mod lowrank;
pub mod mmio;
pub mod operator;
pub mod report;
pub mod riccati_dense;
pub mod samples;
pub mod sparse;
pub mod svd;
pub mod tsylv;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
