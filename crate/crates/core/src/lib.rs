//! Numerical laboratory for 1D semilinear stochastic PDEs
//! `du = (Delta u + f(u)) dt + sigma dW` with trace-class additive noise.
//!
//! Two spatial discretizations ([`fem`] and [`spectral`]), Q-Wiener noise
//! ([`noise`]), seven time-stepping [`schemes`], Monte Carlo drivers
//! ([`ensemble`]) and post-processing ([`analysis`]).

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod fem;
pub mod field;
pub mod noise;
pub mod nonlinearity;
pub mod schemes;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Field, InitialDatum, Problem, Space};
pub use noise::{CovarianceSpec, FemNoiseRoute, NoiseIncrement, NoiseStream};
pub use nonlinearity::Nonlinearity;
pub use schemes::{SchemeKind, SchemeState, Stepper, TrialStatus};
