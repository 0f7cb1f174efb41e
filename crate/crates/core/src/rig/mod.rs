//! Rig parameters and state-space assembly.

mod params;
mod system;

pub use params::{Param, ParameterMask, RigParameters, FIELD_KEYS};
pub use system::{
    assemble_system, assemble_unchecked, motor_angle, Matrix6, SystemMatrices, Vector6,
};
