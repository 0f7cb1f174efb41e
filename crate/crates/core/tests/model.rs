use proptest::prelude::*;
use rig_ident::rig::{assemble_system, RigParameters, Vector6};
use rig_ident::sim::{exact_solution, integrate_trapezoidal, SolverConfig};

fn scaled_params() -> impl Strategy<Value = RigParameters> {
    (
        prop::array::uniform9(0.5f64..1.5),
        0.0f64..0.5,
        -20.0f64..20.0,
    )
        .prop_map(|(s, t1, v)| {
            let n = RigParameters::nominal();
            RigParameters {
                j1: n.j1 * s[0],
                ks: n.ks * s[1],
                jm: n.jm * s[2],
                lm: n.lm * s[3],
                rm: n.rm * s[4],
                kt: n.kt * s[5],
                ke: n.ke * s[6],
                tf: n.tf * s[7],
                cm: n.cm * s[8],
                t1,
                v,
                ..n
            }
        })
}

/// Second derivatives from the torque balances and the circuit equation,
/// written independently of the matrix layout.
fn direct_rates(p: &RigParameters, y: &Vector6) -> Vector6 {
    let (th1, th2, _q, w1, w2, dq) = (y[0], y[1], y[2], y[3], y[4], y[5]);
    let twist = p.ks * (th1 - th2);
    let dd1 = (-twist - p.t1) / p.j1;
    let dd2 = (p.im * p.im * twist + p.im * p.kt * dq - p.cm * w2 - p.im * p.tf) / p.jm;
    let ddq = (p.v - p.rm * dq - p.ke * w2 / p.im) / p.lm;
    Vector6::new(w1, w2, dq, dd1, dd2, ddq)
}

proptest! {
    #[test]
    fn assembly_matches_equations_of_motion(
        p in scaled_params(),
        y in prop::array::uniform6(-100.0f64..100.0),
    ) {
        let sys = assemble_system(&p).unwrap();
        let y = Vector6::from(y);
        let got = sys.derivative(&y);
        let want = direct_rates(&p, &y);
        for i in 0..6 {
            let scale = want[i].abs().max(1.0);
            prop_assert!((got[i] - want[i]).abs() <= 1e-12 * scale, "row {} got {} want {}", i, got[i], want[i]);
        }
    }

    #[test]
    fn doubling_forcing_doubles_trajectory(p in scaled_params()) {
        let sys = assemble_system(&p).unwrap();
        let mut doubled = sys;
        doubled.f *= 2.0;
        let cfg = SolverConfig::new(1e-3, 0.5).unwrap();
        let a = integrate_trapezoidal(&sys, &cfg).unwrap();
        let b = integrate_trapezoidal(&doubled, &cfg).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (x, y) in sa.to_array().iter().zip(sb.to_array()) {
                prop_assert!((2.0 * x - y).abs() <= 1e-10 * y.abs().max(1.0));
            }
        }
    }
}

#[test]
fn corrected_entries_against_printed_matrix() {
    // The printed matrix carries ks/jm and −ke/lm in these slots; the
    // equations of motion require the gearbox factors.
    let p = RigParameters::nominal();
    let a = assemble_system(&p).unwrap().a;
    assert_eq!(a[(4, 0)], p.im * p.im * p.ks / p.jm);
    assert_eq!(a[(5, 4)], -p.ke / (p.im * p.lm));
    assert_ne!(a[(4, 0)], p.ks / p.jm);
    assert_ne!(a[(5, 4)], -p.ke / p.lm);
}

#[test]
fn integration_is_deterministic() {
    let sys = assemble_system(&RigParameters::nominal()).unwrap();
    let cfg = SolverConfig::default();
    let a = integrate_trapezoidal(&sys, &cfg).unwrap();
    let b = integrate_trapezoidal(&sys, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trapezoid_tracks_oracle_on_fine_grid() {
    let sys = assemble_system(&RigParameters::nominal()).unwrap();
    let traj = integrate_trapezoidal(&sys, &SolverConfig::new(1e-4, 2.0).unwrap()).unwrap();
    for k in (0..traj.len()).step_by(1000) {
        let exact = exact_solution(&sys, traj.time(k)).to_array();
        let got = traj.states[k].to_array();
        for c in 0..6 {
            let peak = exact[c].abs().max(1e-3);
            assert!(
                (got[c] - exact[c]).abs() < 2e-4 * peak,
                "t={} c={c}",
                traj.time(k)
            );
        }
    }
}
