//! Joint design of inter-sensor collaboration, per-sensor compression and
//! fusion-center gain for sequential LMMSE estimation over an
//! energy-constrained wireless sensor network.
//!
//! Each time step the fusion center alternates between three convex or
//! near-convex subproblems (collaboration weights, compression vectors,
//! filter gain) and then applies a recursive LMMSE update.

pub mod collab;
pub mod compress;
pub mod error;
pub mod estimator;
pub mod kronmap;
pub mod linalg;
pub mod model;
pub mod qcqp;
pub mod sim;

pub use error::{Error, Result};
