//! Simulation and parameter identification for a torsional test rig made of
//! a flexible shaft, two rotors and a geared DC motor.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod rig;
pub mod sim;

pub use error::{Error, Result};
pub mod estimator;
pub mod measurement;
pub mod optimize;
