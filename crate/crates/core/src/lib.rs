//! Federated identification of linearly-parameterized nonlinear systems.
//!
//! * [`systems`]: system family, pendulum/quadrotor/synthetic instances,
//!   heterogeneous fleets and trajectory generation.
//! * [`estimation`]: closed-form least squares and the error metric.
//! * [`federation`]: client updates, server averaging, the round loop.
//! * [`diagnostics`]: empirical excitation, Gram and bound checks.
//! * [`harness`]: experiment configs, sweeps, CSV output.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod federation;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::{Norm, ParameterMatrix};
