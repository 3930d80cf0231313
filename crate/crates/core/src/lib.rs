//! Merging of independently trained dense classifiers: baselines, the
//! CoGraM granular merge, synthetic data and the experiment harness.

pub mod baseline;
pub mod cogram;
pub mod data;
pub mod error;
pub mod harness;
pub mod net;
pub mod prototypes;
pub mod seed;
mod serde_util;
pub mod train;

pub use error::{Error, Result};
pub use net::Network;
