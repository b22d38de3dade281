//! Spectral simulation and analysis of thin-film interface equations in
//! two-fluid Taylor–Couette flow.
//!
//! Fields are real 2π-periodic functions stored as truncated Fourier series
//! ([`spectral::SpectralField`]). The interface models, their time
//! integration, steady states, the first-harmonic amplitude reduction and the
//! geometric post-processing are split into one module each.

pub mod error;
mod galerkin;
pub mod evolution;
pub mod geometry;
pub mod manifold;
pub mod models;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use spectral::{linear_symbol, NormKind, SobolevIndex, SpectralField};
