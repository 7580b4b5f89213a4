//! Inference of metro rider itineraries from phone accelerometer traces.

pub mod classify;
pub mod coord;
pub mod error;
pub mod evalharness;
pub mod extract;
pub mod features;
pub mod infer;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod segment;
pub mod semisup;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
