//! Sparse and small dense linear algebra kernels.

mod cholesky;
mod csr;
mod dense;
pub mod mtx;
mod ordering;
mod takahashi;

pub use cholesky::{ic0, ic0_shifted, sparse_cholesky, CholeskyFactor, SolveMode};
pub use csr::SparseMatrix;
pub use dense::DenseMatrix;
pub use mtx::{read_matrix_market, write_matrix_market};
pub use ordering::{minimum_degree, Ordering};
pub use takahashi::{takahashi_selected_inverse, SelectedInverse};
