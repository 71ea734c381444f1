//! Gaussian-process regression with low-rank predictive-process
//! approximations, support-point knots, and a seeded experiment harness.

pub mod complexity;
pub mod error;
pub mod gpcore;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod knots;
pub mod predict;
pub mod rng;

pub use error::{Error, Result};
pub use kernel::{CovarianceSpec, PointSet};
