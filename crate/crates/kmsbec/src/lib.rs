//! Thermal equilibrium and Bose-Einstein condensation for a charged scalar
//! field at finite chemical potential: dispersion, propagators,
//! coincident-point thermal integrals, Hadamard parametrix coefficients,
//! connected graph expansions, and Goldstone-charge diagnostics.

pub mod cli;
pub mod error;
pub mod goldstone;
pub mod graphs;
pub mod hadamard;
pub mod model;
pub mod pauli;
pub mod propagators;
pub mod quad;
pub mod roots;
pub mod thermal;

pub use error::{Error, Result};
pub use model::{MassSpectrum, ModelParams};
