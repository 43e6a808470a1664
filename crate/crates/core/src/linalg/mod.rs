//! Sparse storage, direct factorization, condition numbers and pencil eigenpairs.

pub mod cond;
pub mod eigen;
pub mod lu;
pub mod ordering;
pub mod sparse;

pub use cond::{condition_estimate, condition_number, CondEstimate, CondMethod};
pub use eigen::{inverse_subspace_iteration, smallest_generalized_eigenpair, EigenPair, ShiftInvert};
pub use lu::{factorize, Factorization};
pub use sparse::{dot, norm2, SparseMatrix};
