pub mod error;
pub mod kpz;
pub mod field;
pub mod rng;
pub mod kernels;
pub mod quadrature;
pub mod special;
pub mod chaos;
pub mod cli;
pub mod config;
pub mod stats;

pub use error::{Error, Result};
