pub mod benchmarking;
pub mod coherence;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod fit;
pub mod noise;
pub mod presets;
pub mod quad;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
