//! Location-scale Dirichlet process mixtures of multivariate Gaussians.
//!
//! The crate covers the full workflow: a marginal Gibbs sampler for the
//! mixture posterior, the affine map on base-measure hyperparameters that
//! makes inference invariant to affine changes of the data, grid-based
//! predictive densities with L1/Hellinger distances, and partition summaries
//! (posterior similarity, variation of information, credible balls).
//! `scenario` and `experiment` drive the replicate studies.

pub mod clustering;
pub mod density;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod mathcore;
pub mod model;
pub mod sampler;
pub mod scenario;

pub use error::{Error, Result};
