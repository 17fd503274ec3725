//! Simulation and recovery of bandlimited continuous-time graph signals
//! observed through self-reset (modulo) analog-to-digital converters.

pub mod error;
pub mod experiment;
pub mod graph;
pub mod image;
pub mod partition;
pub mod recovery;
pub mod signal;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
