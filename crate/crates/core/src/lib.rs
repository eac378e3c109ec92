pub mod config;
pub mod dataset;
pub mod distributions;
pub mod error;
pub mod gradfeat;
pub mod harness;
pub mod net;
pub mod oracle;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
