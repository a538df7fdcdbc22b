//! Trace-driven cache simulator built around a popularity-prediction caching
//! policy (feedforward-network predictor over epoch popularity features,
//! min-heap admission/eviction) and the LRU, ARC and linear/averaging
//! predictor baselines.

pub mod engine;
pub mod error;
pub mod featurestore;
pub mod neuralnet;
pub mod policies;
pub mod predictors;
pub mod trace;

pub use error::{Error, Result};
