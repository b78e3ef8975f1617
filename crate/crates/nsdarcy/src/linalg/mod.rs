//! Sparse matrix storage and the direct solver used for every monolithic
//! saddle-point system.

pub mod lu;
pub mod ordering;
pub mod sparse;

pub use lu::{analyze, factorize, factorize_with, lu_solve, solve_checked, FactorPerm, Factorization};
pub use sparse::{LinalgError, SparseMatrix};
