//! Selected inversion for sparse Gaussian Markov random fields.

pub mod error;
pub mod inference;
pub mod estimators;
pub mod krylov;
pub mod model;
pub mod oracle;
pub mod partition;
pub mod sparse;

pub use error::{Error, Result};
