pub mod audit;
pub mod debias;
pub mod error;
pub mod forecaster;
pub mod loss;
pub mod panel;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
