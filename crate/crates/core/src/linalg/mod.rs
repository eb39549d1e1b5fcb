//! Small dense kernels and a sparse envelope LDLᵀ.
//!
//! Everything here is sized for moment problems: PSD blocks of a few dozen
//! rows and KKT systems with a few tens of thousands of unknowns.

mod dense;
mod sparse;

pub use dense::{cholesky, lower_inverse, lu_solve, min_eigenvalue, svd, sym_eigen, Mat};
pub use sparse::{pattern_adjacency, reverse_cuthill_mckee, EnvelopeLdl};
