//! Estimation and rank selection for high-dimensional matrix-valued time
//! series driven jointly by I(1) common stochastic trends and I(0)
//! stationary common factors, with a Monte Carlo harness for simulation
//! studies.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod ranksel;
pub mod util;

pub use error::{Error, Result};
