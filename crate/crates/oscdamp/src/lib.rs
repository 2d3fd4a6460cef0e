//! Damped harmonic oscillator dynamics in a truncated Fock space.
//!
//! The crate covers the amplitude-damping Liouvillian and its damping bases,
//! Jaynes-Cummings and parity kicks from a micromaser beam, conditional
//! evolution for partial observers, photon-counting statistics and
//! quantum-trajectory simulation.

pub mod damping;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod liouvillian;
pub mod micromaser;
pub mod quadrature;
pub mod specialfns;
pub mod statistics;
pub mod superop;
pub mod trajectory;

pub use error::{Error, Result};
pub use faer::c64;
pub use fock::{DensityMatrix, FockOperator, PhasePoint};
pub use liouvillian::OscillatorParams;
pub use micromaser::{Branch, DetectionConfig, KickPair};
pub use superop::SuperOperator;
