//! Numerical laboratory for the cubic NLS and the de Finetti representation of
//! Gross-Pitaevskii hierarchy solutions.

pub mod blowup;
pub mod dynamics;
pub mod ensemble;
pub mod error;
mod fft;
pub mod gaussian;
pub mod hierarchy;
pub mod logspace;
pub mod observables;
pub mod scattering;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
