use nalgebra::{SMatrix, SVector};

use super::RigParameters;
use crate::error::Result;

pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Vector6 = SVector<f64, 6>;

/// First-order form `ẏ = A·y + F` of the rig dynamics, with the state ordered
/// `(θ1, θ2, q, θ̇1, θ̇2, q̇)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix6,
    pub f: Vector6,
}

impl SystemMatrices {
    pub fn zero() -> Self {
        Self {
            a: Matrix6::zeros(),
            f: Vector6::zeros(),
        }
    }

    pub fn derivative(&self, y: &Vector6) -> Vector6 {
        self.a * y + self.f
    }
}

/// Assembles `A` and `F` from the rotor torque balance, the gearbox-reduced
/// motor torque balance and the motor circuit equation.
///
/// Rejects parameter sets that violate the positivity constraints.
pub fn assemble_system(p: &RigParameters) -> Result<SystemMatrices> {
    p.validate()?;
    Ok(assemble_unchecked(p))
}

/// Same as [`assemble_system`] without validation. Degenerate inputs such as
/// `ks = 0` are allowed; zero inertias or inductance produce non-finite
/// entries.
pub fn assemble_unchecked(p: &RigParameters) -> SystemMatrices {
    let mut a = Matrix6::zeros();
    // kinematic rows: d/dt (θ1, θ2, q) = (θ̇1, θ̇2, q̇)
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;

    // j1·θ̈1 + ks(θ1 − θ2) = −t1
    let twist1 = p.ks / p.j1;
    a[(3, 0)] = -twist1;
    a[(3, 1)] = twist1;

    // jm·θ̈2 − im²·ks(θ1 − θ2) − im·kT·q̇ + cm·θ̇2 = −im·tf
    let twist2 = p.im * p.im * p.ks / p.jm;
    a[(4, 0)] = twist2;
    a[(4, 1)] = -twist2;
    a[(4, 4)] = -p.cm / p.jm;
    a[(4, 5)] = p.im * p.kt / p.jm;

    // lm·q̈ + rm·q̇ + ke·θ̇2/im = v
    a[(5, 4)] = -p.ke / (p.im * p.lm);
    a[(5, 5)] = -p.rm / p.lm;

    let f = Vector6::new(0.0, 0.0, 0.0, -p.t1 / p.j1, -p.im * p.tf / p.jm, p.v / p.lm);
    SystemMatrices { a, f }
}

/// Motor shaft angle from the gearbox output angle, `θ3 = θ2 / im`.
pub fn motor_angle(theta2: f64, p: &RigParameters) -> f64 {
    theta2 / p.im
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::Param;
    use approx::assert_relative_eq;

    #[test]
    fn nominal_entries() {
        let s = assemble_system(&RigParameters::nominal()).unwrap();
        assert_relative_eq!(s.a[(3, 0)], -10.60070671378092, max_relative = 1e-14);
        assert_relative_eq!(s.f[4], -31.25, max_relative = 1e-14);
        assert_relative_eq!(s.f[5], 7272.727272727273, max_relative = 1e-14);
        // corrected entries: im²ks/jm and −ke/(im·lm)
        assert_relative_eq!(
            s.a[(4, 0)],
            0.125 * 0.125 * 0.3 / 4.0e-4,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            s.a[(5, 4)],
            -0.06016 / (0.125 * 1.1e-3),
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_stiffness_decouples_rotors() {
        let p = RigParameters {
            ks: 0.0,
            ..RigParameters::nominal()
        };
        assert!(assemble_system(&p).is_err());
        let s = assemble_unchecked(&p);
        for (r, c) in [(3, 0), (3, 1), (4, 0), (4, 1)] {
            assert_eq!(s.a[(r, c)], 0.0);
        }
    }

    #[test]
    fn structural_pattern() {
        let p = RigParameters::nominal()
            .with(Param::Ks, 0.27)
            .with(Param::Rm, 0.53);
        let s = assemble_system(&p).unwrap();
        for r in 0..3 {
            for c in 0..6 {
                let expected = if c == r + 3 { 1.0 } else { 0.0 };
                assert_eq!(s.a[(r, c)], expected);
            }
            assert_eq!(s.f[r], 0.0);
        }
        for r in 0..6 {
            assert_eq!(s.a[(r, 2)], 0.0);
        }
        assert_eq!(s.a[(3, 0)], -s.a[(3, 1)]);
        assert_eq!(s.a[(4, 0)], -s.a[(4, 1)]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let p = RigParameters::nominal().with(Param::Jm, -1.0);
        assert!(assemble_system(&p).is_err());
    }

    #[test]
    fn motor_angle_gearbox() {
        let p = RigParameters::nominal();
        assert_eq!(motor_angle(0.0, &p), 0.0);
        assert_eq!(motor_angle(1.0, &p), 8.0);
        let unity = RigParameters { im: 1.0, ..p };
        assert_eq!(
            motor_angle(std::f64::consts::PI, &unity),
            std::f64::consts::PI
        );
    }
}
