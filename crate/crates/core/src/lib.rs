//! Lifted random-duality free energies for the injectivity capacity of
//! Gaussian ReLU layers.
//!
//! The crate evaluates the lifted free energy `psi` at lifting levels 1, 2
//! (partial and full) and 3, solves the stationarity systems, and locates the
//! capacity `alpha*` as the root of `psi` in `alpha`. A small Monte Carlo lab
//! probes finite instances of the underlying feasibility problem.

pub mod error;
pub mod gaussian;
pub mod inner;
pub mod lab;
pub mod level1;
pub mod level2;
pub mod level3;
pub mod model;
pub mod roots;
pub mod solver;

pub use error::{Error, Result};
pub use model::{AuxParams, EvalPoint, EvalResult, Level, LiftingParams, QuadConfig};
