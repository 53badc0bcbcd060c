//! Unsupervised team selection: bias-corrected random-forest feature
//! selection, Laplacian eigenmaps, recursive Fiedler bisection and SOM-based
//! validation of the cluster count.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
