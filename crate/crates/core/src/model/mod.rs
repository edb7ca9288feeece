//! Precision builders and the latent Gaussian model.

mod io;
mod latent;
mod precision;

pub use io::{format_kv, load_model, parse_kv, save_model, META_VERSION};
pub use latent::{assemble_posterior_blocks, random_latent_model, simulate_observations, LatentModel, PosteriorBlocks, SlabLayout};
pub use precision::{
    build_ar1_precision, build_spacetime_precision, build_spatial_precision, build_temporal_matrices, lattice_fem,
    sum_of_kronecker_terms, SpaceTimeSpec, SpaceTimeTerms, SpatialSpec, TemporalMatrices,
};
