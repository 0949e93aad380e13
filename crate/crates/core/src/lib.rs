//! Inference on quantiles of individual treatment effects in randomized
//! experiments.

pub mod cre;
pub mod error;
pub mod harness;
pub mod hyper;
pub mod model;
pub mod par;
pub mod rankstat;
pub mod rng;
pub mod stratified;

pub use error::{Error, Result};
