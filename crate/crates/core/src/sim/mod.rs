//! Time integration of the rig dynamics.
//!
//! The production path is a fixed-step implicit trapezoidal rule; because `A`
//! and `F` are constant the step matrix is factored once per run. The
//! matrix-exponential solution in [`exact_solution`] is an independent
//! reference used for verification.

mod expm;

use std::io::Write;
use std::path::Path;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::rig::{Matrix6, SystemMatrices, Vector6};

pub use expm::expm;

/// Rig state in the order `(θ1, θ2, q, θ̇1, θ̇2, q̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub theta1: f64,
    pub theta2: f64,
    pub q: f64,
    pub dtheta1: f64,
    pub dtheta2: f64,
    pub dq: f64,
}

impl StateVector {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.theta1,
            self.theta2,
            self.q,
            self.dtheta1,
            self.dtheta2,
            self.dq,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

impl From<Vector6> for StateVector {
    fn from(v: Vector6) -> Self {
        Self {
            theta1: v[0],
            theta2: v[1],
            q: v[2],
            dtheta1: v[3],
            dtheta2: v[4],
            dq: v[5],
        }
    }
}

impl From<StateVector> for Vector6 {
    fn from(s: StateVector) -> Self {
        Vector6::from(s.to_array())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self { dt, t_end };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite()
            && self.t_end.is_finite()
            && self.dt > 0.0
            && self.dt <= self.t_end)
        {
            return Err(Error::InvalidSolver(format!(
                "need 0 < dt <= t_end, got dt={}, t_end={}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }

    /// Number of steps; the last grid point is the first one at or beyond `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 10.0,
        }
    }
}

/// States on the uniform grid `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<StateVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,theta1,theta2,q,dtheta1,dtheta2,dq")?;
        for (k, s) in self.states.iter().enumerate() {
            write!(out, "{}", self.time(k))?;
            for x in s.to_array() {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Integrates `ẏ = A·y + F` from `y(0) = 0` with the implicit trapezoidal rule
///
/// `(I − h/2·A)·y[n+1] = (I + h/2·A)·y[n] + h·F`.
pub fn integrate_trapezoidal(sys: &SystemMatrices, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    let h = cfg.dt;
    let lhs = Matrix6::identity() - sys.a * (h / 2.0);
    let rhs = Matrix6::identity() + sys.a * (h / 2.0);
    let forcing = sys.f * h;

    let threshold = 1e-14 * lhs.amax();
    let lu = lhs.lu();
    let pivot = lu.u().diagonal().amin();
    if !(pivot >= threshold) || !lhs.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularStepMatrix { pivot, threshold });
    }

    let mut states = Vec::with_capacity(steps + 1);
    let mut y = Vector6::zeros();
    states.push(StateVector::from(y));
    for step in 1..=steps {
        let mut next = rhs * y + forcing;
        lu.solve_mut(&mut next);
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::Diverged { step });
        }
        y = next;
        states.push(StateVector::from(y));
    }
    Ok(Trajectory {
        t0: 0.0,
        dt: h,
        states,
    })
}

/// Closed-form solution from the zero initial state, via the exponential of
/// the augmented matrix `[[A, F], [0, 0]]`.
pub fn exact_solution(sys: &SystemMatrices, t: f64) -> StateVector {
    let mut m = SMatrix::<f64, 7, 7>::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&sys.a);
    m.fixed_view_mut::<6, 1>(0, 6).copy_from(&sys.f);
    let e = expm(&(m * t));
    let z: SVector<f64, 7> = e.column(6).into_owned();
    StateVector::from(z.fixed_rows::<6>(0).into_owned())
}

/// Observed convergence order of the trapezoidal scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceOrder {
    /// Errors at all three step sizes were exactly zero.
    Exact,
    Observed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderCheck {
    /// Max-norm errors at `t` for `dt`, `dt/2`, `dt/4`.
    pub errors: [f64; 3],
    /// `log2(e[dt] / e[dt/2])`.
    pub order: ConvergenceOrder,
    /// `log2(e[dt/2] / e[dt/4])`, reported for inspection.
    pub refined_order: ConvergenceOrder,
}

/// Runs the trapezoidal scheme with `dt`, `dt/2` and `dt/4` up to `t` and
/// compares each end state with [`exact_solution`].
pub fn richardson_order_check(sys: &SystemMatrices, t: f64, dt: f64) -> Result<OrderCheck> {
    let reference: Vector6 = exact_solution(sys, t).into();
    let mut errors = [0.0; 3];
    for (i, h) in [dt, dt / 2.0, dt / 4.0].into_iter().enumerate() {
        let traj = integrate_trapezoidal(sys, &SolverConfig::new(h, t)?)?;
        let end: Vector6 = (*traj.last()).into();
        errors[i] = (end - reference).amax();
    }
    let ratio = |coarse: f64, fine: f64| {
        if coarse == 0.0 && fine == 0.0 {
            ConvergenceOrder::Exact
        } else {
            ConvergenceOrder::Observed((coarse / fine).log2())
        }
    };
    let order = if errors.iter().all(|&e| e == 0.0) {
        ConvergenceOrder::Exact
    } else {
        ratio(errors[0], errors[1])
    };
    Ok(OrderCheck {
        errors,
        order,
        refined_order: ratio(errors[1], errors[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::{assemble_system, assemble_unchecked, RigParameters};

    fn nominal() -> SystemMatrices {
        assemble_system(&RigParameters::nominal()).unwrap()
    }

    #[test]
    fn zero_forcing_stays_at_rest() {
        let p = RigParameters {
            v: 0.0,
            tf: 0.0,
            t1: 0.0,
            ..RigParameters::nominal()
        };
        let traj = integrate_trapezoidal(
            &assemble_system(&p).unwrap(),
            &SolverConfig::new(1e-2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.states.iter().all(|s| *s == StateVector::default()));
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(SolverConfig::default().steps(), 10_000);
        assert_eq!(SolverConfig::new(1e-4, 0.5).unwrap().steps(), 5_000);
        assert_eq!(SolverConfig::new(0.3, 1.0).unwrap().steps(), 4);
        assert!(SolverConfig::new(0.0, 1.0).is_err());
        assert!(SolverConfig::new(2.0, 1.0).is_err());
        assert!(SolverConfig::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn scheme_relation_holds() {
        let sys = nominal();
        let h = 1e-3;
        let traj = integrate_trapezoidal(&sys, &SolverConfig::new(h, 1.0).unwrap()).unwrap();
        let lhs = Matrix6::identity() - sys.a * (h / 2.0);
        let rhs = Matrix6::identity() + sys.a * (h / 2.0);
        for w in traj.states.windows(2) {
            let (y0, y1): (Vector6, Vector6) = (w[0].into(), w[1].into());
            let residual = lhs * y1 - rhs * y0 - sys.f * h;
            assert!(residual.amax() < 1e-10, "{residual}");
        }
    }

    #[test]
    fn exact_solution_simple_cases() {
        assert_eq!(exact_solution(&nominal(), 0.0), StateVector::default());
        let drift = SystemMatrices {
            a: Matrix6::zeros(),
            f: Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 2.5),
        };
        let s = exact_solution(&drift, 3.0);
        assert_eq!(s.dq, 7.5);
        assert_eq!([s.theta1, s.theta2, s.dtheta1, s.dtheta2], [0.0; 4]);
    }

    #[test]
    fn trapezoidal_matches_exact_at_half_second() {
        let sys = nominal();
        let traj = integrate_trapezoidal(&sys, &SolverConfig::new(1e-4, 0.5).unwrap()).unwrap();
        let exact = exact_solution(&sys, 0.5).to_array();
        for (a, b) in traj.last().to_array().iter().zip(exact) {
            assert!((a - b).abs() / b.abs().max(1e-9) < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn stiff_regime_stays_finite() {
        let p = RigParameters {
            lm: 1.1e-5,
            ..RigParameters::nominal()
        };
        let traj = integrate_trapezoidal(
            &assemble_system(&p).unwrap(),
            &SolverConfig::new(1e-3, 2.0).unwrap(),
        )
        .unwrap();
        assert!(traj.states.iter().all(StateVector::is_finite));
    }

    #[test]
    fn large_steps_stay_finite() {
        let traj =
            integrate_trapezoidal(&nominal(), &SolverConfig::new(0.1, 10.0).unwrap()).unwrap();
        assert!(traj.states.iter().all(StateVector::is_finite));
    }

    #[test]
    fn singular_step_matrix_detected() {
        // I − h/2·A is singular when A has eigenvalue 2/h.
        let mut sys = SystemMatrices::zero();
        sys.a[(0, 0)] = 20.0;
        let err = integrate_trapezoidal(&sys, &SolverConfig::new(0.1, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::SingularStepMatrix { .. }), "{err}");
    }

    #[test]
    fn divergence_reports_step() {
        let mut sys = SystemMatrices::zero();
        sys.a[(0, 0)] = 19.0;
        sys.f[0] = 1.0;
        // amplification (1 + 0.95)/(1 − 0.95) = 39 per step
        let err =
            integrate_trapezoidal(&sys, &SolverConfig::new(0.1, 1000.0).unwrap()).unwrap_err();
        match err {
            Error::Diverged { step } => assert!(step > 100 && step < 300, "{step}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_forcing_order_is_exact() {
        let p = RigParameters {
            v: 0.0,
            tf: 0.0,
            ..RigParameters::nominal()
        };
        let check = richardson_order_check(&assemble_unchecked(&p), 1.0, 1e-2).unwrap();
        assert_eq!(check.order, ConvergenceOrder::Exact);
    }

    #[test]
    fn csv_export_header_and_rows() {
        let traj =
            integrate_trapezoidal(&nominal(), &SolverConfig::new(0.25, 1.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,theta1,theta2,q,dtheta1,dtheta2,dq");
        assert_eq!(lines.len(), 6);
        let last: Vec<f64> = lines[5].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
        assert_eq!(last[1..], traj.last().to_array());
    }
}
