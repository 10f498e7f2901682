//! Sparse storage, fill-reducing ordering and direct solves.

mod csr;
mod lu;
mod ordering;

pub use csr::CsrMatrix;
pub use lu::{SparseLu, PIVOT_THRESHOLD};
pub use ordering::minimum_degree;
