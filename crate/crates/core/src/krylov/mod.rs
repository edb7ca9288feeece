//! Conjugate gradients, Lanczos and the preconditioned Krylov sampler.

mod cg;
mod lanczos;
mod operator;
mod sampler;
mod tridiag;

pub use cg::{cg_solve, SolveReport};
pub use lanczos::{apply_inv_sqrt, lanczos, lanczos_with, LanczosDecomposition, LanczosOptions, StopRule};
pub use operator::{check_symmetric, LinearOperator, PreconditionedOperator};
pub use sampler::{sample_gmrf, samples_to_csv, standard_normal_stream, SampleSet};
pub use tridiag::{tridiag_eig, TridiagEigen};
