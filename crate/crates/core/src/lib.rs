pub mod channels;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod entropy;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod sampling;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
