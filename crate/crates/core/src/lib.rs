//! Score-based diffusion surrogates for 1D PDEs: data generation, score
//! networks, guided and autoregressive samplers, a Gaussian oracle, and
//! evaluation metrics for forecasting and data assimilation.

pub mod conditioning;
pub mod denoise;
pub mod error;
pub mod evalmetrics;
pub mod oracle;
pub mod pdesolve;
pub mod real;
pub mod rng;
pub mod sampler;
pub mod scorenet;
pub mod sdecore;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{Dtype, Normalizer, Trajectory, TrajectoryFile};
