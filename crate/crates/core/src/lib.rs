//! Automated EXAFS fitting with a genetic algorithm.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectra`]: k-grids, χ(k) containers, window functions and the k→R transform.
//! - [`paths`]: FEFF `feffNNNN.dat` path files and synthetic analytic paths.
//! - [`model`]: the EXAFS path-sum forward model.
//! - [`fitness`]: χ² objective in k- and/or R-space and report metrics.
//! - [`ga`]: chromosomes, selection, crossover, mutation, adaptive mutation rate, run loop.
//! - [`analysis`]: path cutoff, ensemble error analysis, operator attribution, synthetic data.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod model;
pub mod paths;
pub mod spectra;

pub use error::{Error, Result};
