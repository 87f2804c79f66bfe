//! Linear-algebra and probability primitives shared by the sampler and the
//! post-processing modules.

pub mod dist;
pub mod matrix;
pub mod rng;

pub use dist::{
    categorical_sample, log_sum_exp, mvn_from_normals, mvn_logpdf, sample_beta, sample_gamma, sample_inv_wishart,
    sample_mvn, sample_wishart, standard_normals, InverseWishart,
};
pub use matrix::{cholesky, SpdMatrix};
pub use rng::{derive_seed, RngStream};
