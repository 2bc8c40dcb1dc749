//! Simulation and likelihood-ratio diagnostics for ergodic jump-diffusions
//! observed at high frequency.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`. Statistics and orchestration work in `f64`.

pub mod density;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod lan;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use rng::StreamKey;
pub use scalar::Real;

pub type Model = model::JumpDiffusionModel<f64>;
pub type Levy = model::LevySpec<f64>;
pub type Context = model::ParameterContext<f64>;
