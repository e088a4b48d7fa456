//! Neural mutual-information lower bounds (Donsker-Varadhan and InfoNCE),
//! a local one-way-max objective between image feature grids and sentence
//! features, exact oracles on synthetic worlds, and a downstream probe
//! harness.

pub mod cli;
pub mod downstream_eval;
pub mod encoders;
pub mod error;
pub mod estimators;
pub mod local_mi;
pub mod synthetic;
pub mod trainer;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
