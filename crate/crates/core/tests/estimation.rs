use rig_ident::estimator::{
    estimate_ninefold, estimate_pair, weighted_misfit, EstimationProblem, HeuristicConfig,
    SearchMode,
};
use rig_ident::measurement::{add_noise, observe, MeasurementSet};
use rig_ident::rig::{assemble_system, Param, ParameterMask, RigParameters};
use rig_ident::sim::{integrate_trapezoidal, SolverConfig};
use tempfile::TempDir;

fn solver() -> SolverConfig {
    SolverConfig::new(1e-3, 2.0).unwrap()
}

fn synthetic(truth: &RigParameters, sigma: f64, seed: u64) -> MeasurementSet {
    let traj = integrate_trapezoidal(&assemble_system(truth).unwrap(), &solver()).unwrap();
    add_noise(&observe(&traj), sigma, seed)
}

fn pair_problem(sigma_data: f64, sigma_misfit: f64) -> EstimationProblem {
    let truth = RigParameters::nominal();
    EstimationProblem::new(
        synthetic(&truth, sigma_data, 5),
        truth,
        ParameterMask::all(),
        solver(),
        sigma_misfit,
    )
    .unwrap()
    .with_free(&[Param::Cm, Param::Ke])
}

fn perturbed_truth() -> RigParameters {
    let mut p = RigParameters::nominal();
    for q in Param::ALL {
        p.set(q, 1.1 * p.get(q));
    }
    p
}

#[test]
fn noise_free_pair_recovery() {
    let est = estimate_pair(&pair_problem(0.0, 1.0), [0.001, 0.01], SearchMode::full()).unwrap();
    let truth = RigParameters::nominal();
    assert!(
        (est.values[0] / truth.cm - 1.0).abs() < 1e-6,
        "cm {}",
        est.values[0]
    );
    assert!(
        (est.values[1] / truth.ke - 1.0).abs() < 1e-6,
        "ke {}",
        est.values[1]
    );
}

#[test]
fn misfit_weight_scales_value_and_keeps_moves() {
    let base = pair_problem(0.01, 1.0);
    let x = [2.0e-4, 0.061];
    let reference = base.misfit(&x);
    for sigma in [0.5, 0.01, 3.0] {
        let scaled = base.with_sigma(sigma);
        let ratio = scaled.misfit(&x) * sigma * sigma / reference;
        assert!((ratio - 1.0).abs() < 1e-12, "sigma {sigma}: ratio {ratio}");

        let a = estimate_pair(&base, [0.001, 0.01], SearchMode::Budgeted(60)).unwrap();
        let b = estimate_pair(&scaled, [0.001, 0.01], SearchMode::Budgeted(60)).unwrap();
        assert_eq!(a.optimizer.moves, b.optimizer.moves, "sigma {sigma}");
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn hand_computed_misfit() {
    let data = MeasurementSet {
        times: vec![0.0, 1.0],
        theta1: vec![0.1, -0.2],
        theta2: vec![0.0; 2],
        dtheta1: vec![0.0; 2],
        dtheta2: vec![0.0; 2],
        sigma_n: 1.0,
        seed: None,
    };
    let model = MeasurementSet {
        theta1: vec![0.0; 2],
        ..data.clone()
    };
    let m = weighted_misfit(&data, &model, 1.0);
    // 0.1 and 0.2 are not binary fractions; the sum of squares is 0.05 up to one ulp.
    assert_eq!(m, 0.1f64 * 0.1 + 0.2 * 0.2);
    assert!((m - 0.05).abs() <= f64::EPSILON * 0.05);
    assert_eq!(weighted_misfit(&data, &model, 0.5), 4.0 * m);
}

fn ninefold_problem() -> EstimationProblem {
    let truth = perturbed_truth();
    EstimationProblem::new(
        synthetic(&truth, 0.01, 42),
        truth,
        ParameterMask::all(),
        solver(),
        1.0,
    )
    .unwrap()
}

fn guesses() -> RigParameters {
    RigParameters::nominal()
        .with(Param::Cm, 19.0e-5)
        .with(Param::Ks, 2.6e-1)
}

#[test]
fn stages_chain_and_never_increase_misfit() {
    let prob = ninefold_problem();
    let cfg = HeuristicConfig {
        max_cycles: 3,
        ..HeuristicConfig::default()
    };
    let state = estimate_ninefold(&prob, &guesses(), &cfg).unwrap();
    assert_eq!(state.trace.len(), 27);
    assert_eq!(state.trace[0].entry_misfit, state.initial_misfit);
    for w in state.trace.windows(2) {
        assert_eq!(w[1].entry_misfit, w[0].misfit);
    }
    for r in &state.trace {
        assert!(r.misfit <= r.entry_misfit);
        assert_eq!(r.iterations, cfg.budget);
    }
    assert_eq!(state.misfit, state.trace.last().unwrap().misfit);
    assert_eq!(prob.misfit_of(&state.current), state.misfit);
}

#[test]
fn infinite_steady_tolerance_stops_after_one_cycle() {
    let cfg = HeuristicConfig {
        steady_tol: f64::INFINITY,
        ..HeuristicConfig::default()
    };
    let state = estimate_ninefold(&ninefold_problem(), &guesses(), &cfg).unwrap();
    assert!(state.steady);
    assert_eq!(state.cycle, 1);
    assert_eq!(state.trace.len(), 9);
}

#[test]
fn masked_pairs_are_skipped() {
    let prob = ninefold_problem();
    let restricted = EstimationProblem::new(
        prob.data.clone(),
        prob.fixed,
        ParameterMask::new([Param::Jm, Param::Cm, Param::Ke]),
        prob.solver,
        1.0,
    )
    .unwrap();
    let cfg = HeuristicConfig {
        max_cycles: 1,
        ..HeuristicConfig::default()
    };
    let state = estimate_ninefold(&restricted, &guesses(), &cfg).unwrap();
    let pairs: Vec<_> = state.trace.iter().map(|r| r.pair).collect();
    assert_eq!(pairs, vec![(Param::Jm, Param::Cm), (Param::Cm, Param::Ke)]);
    assert_eq!(state.current.ks, prob.fixed.ks);
}

#[test]
fn parameter_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("truth.toml");
    let p = perturbed_truth().with(Param::Tf, 0.123456789012345);
    p.save(&path).unwrap();
    assert_eq!(RigParameters::load(&path).unwrap(), p);
}
