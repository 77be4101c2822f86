//! Command-line and HTTP front ends for the `starseg` engine.

pub mod outputs;
pub mod service;
