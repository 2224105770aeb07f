//! Fock-state stabilization in two cross-Kerr coupled cavities.
//!
//! A driven storage mode is conditionally cooled through a lossy cooling mode;
//! this crate builds the truncated model, solves the Lindblad master equation
//! (steady state and time evolution) and analyses the result.

// `!(x >= 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod error;
pub mod fock;
pub mod lindblad;
pub mod model;
pub mod observables;
pub mod rate_model;
pub mod sweep;
pub mod tomography;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, HilbertSpace, ModeSpec, Operator, StateVector};
pub use lindblad::{evolve, liouvillian, steady_state, EvolutionResult, EvolveOptions, Liouvillian};
pub use model::{KappaConvention, Preset, SystemParams};
