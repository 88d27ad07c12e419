//! Solitary waves in FPUT lattices with weak random spring heterogeneity:
//! direct simulation, modulation coordinates, the small-heterogeneity
//! expansion, radiative tails and the mean attenuation rate.

pub mod attenuation;
pub mod ensemble;
pub mod expansion;
pub mod error;
pub mod frame;
pub mod io;
pub mod kernel;
pub mod lattice;
pub mod modulation;
pub mod ode;
pub mod profile;
pub mod spectral;
pub mod tail;

pub use error::{Error, ErrorClass, Result};
