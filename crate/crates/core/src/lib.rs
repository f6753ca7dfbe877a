pub mod airy;
pub mod bbm;
pub mod error;
pub mod field;
pub mod fkpp;
pub mod gibbs;
pub mod law;
pub mod parallel;
pub mod predictor;
pub mod quad;
pub mod rng;
pub mod sigma;
pub mod spectral;
pub mod stats;
mod tridiag;

pub use error::{Error, Result};
