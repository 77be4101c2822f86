//! Star-shape constrained segmentation of grayscale images.
//!
//! A prior level set (a disk) is deformed by a smooth transformation `y` so
//! that the deformed region `{phi0(y(x)) >= 0}` fits the image, subject to
//! the constraint `<grad(phi0 o y), x - c> <= 0`, which makes the region
//! star-shaped with respect to the center `c`. The constrained problem is
//! solved with ADMM, a modified Newton inner solver and a coarse-to-fine
//! image pyramid.

pub mod config;
pub mod constraint;
pub mod error;
pub mod grid;
pub mod imageio;
pub mod levelset;
pub mod multilevel;
pub mod region_force;
pub mod solver;

pub use error::{Error, Result};
