//! Simulation and local-measurement inference for linear hyperbolic SPDEs
//! `du = v dt`, `dv = (A u + B v) dt + dW` on an interval with Dirichlet
//! boundary conditions.

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod kernels;
pub mod measurements;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod spectral_sim;

pub use error::{Error, Result};
