//! Command implementations. Every command validates its inputs and computes
//! all results in memory before the first output file is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rig_ident::estimator::{
    deviation_report, estimate_ninefold, estimate_pair, write_report_csv, EstimationProblem,
    SearchMode,
};
use rig_ident::measurement::{add_noise, load_measurements, observe, MeasurementSet};
use rig_ident::optimize::Tolerances;
use rig_ident::rig::{assemble_system, Param, ParameterMask, RigParameters};
use rig_ident::sim::{integrate_trapezoidal, SolverConfig, Trajectory};

use crate::config::RunConfig;

pub const OUT_ENV: &str = "RIG_IDENT_OUT";

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const VERIFY2_FILE: &str = "verify2.csv";
pub const REPORT_FILE: &str = "estimate9_report.csv";
pub const TRACE_FILE: &str = "estimate9_trace.csv";
pub const FIT_FILE: &str = "estimate9_fit.csv";

pub const VERIFY2_HEADER: &str =
    "sigma_n,seed,cm_estimate,cm_deviation_pct,ke_estimate,ke_deviation_pct,misfit,iterations,evals";

/// Command-line values that take precedence over the config document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub data: Option<PathBuf>,
    pub synthetic_truth: Option<PathBuf>,
}

/// Loads the config (or defaults) and applies command-line overrides.
/// `--sigma` sets the synthetic noise level and replaces the `verify2` list.
pub fn resolve_config(config: Option<&Path>, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &ov.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(sigma) = ov.sigma {
        cfg.noise_sigma = sigma;
        cfg.verify_sigmas = vec![sigma];
    }
    if let Some(d) = &ov.data {
        cfg.data = Some(d.clone());
    }
    if let Some(t) = &ov.synthetic_truth {
        cfg.synthetic_truth = Some(t.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `paths.out` or `--out`, then `$RIG_IDENT_OUT`, then the working directory.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| {
            std::env::var_os(OUT_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Files produced by a command plus a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Pending {
    dir: PathBuf,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Pending {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let dir = output_dir(cfg);
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let meta = std::fs::metadata(&dir)
            .with_context(|| format!("cannot access output directory {}", dir.display()))?;
        if meta.permissions().readonly() {
            bail!("output directory {} is not writable", dir.display());
        }
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn add(
        &mut self,
        name: &'static str,
        render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) {
        let mut buf = Vec::new();
        render(&mut buf).expect("writing to memory cannot fail");
        self.files.push((name, buf));
    }

    fn commit(self, summary: String) -> Result<Outcome> {
        let mut files = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes)
                .with_context(|| format!("cannot write {}", path.display()))?;
            files.push(path);
        }
        Ok(Outcome { files, summary })
    }
}

fn simulate_params(params: &RigParameters, solver: &SolverConfig) -> Result<Trajectory> {
    let sys = assemble_system(params)?;
    Ok(integrate_trapezoidal(&sys, solver)?)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.rig_parameters()?;
    let mut out = Pending::new(cfg)?;
    let traj = simulate_params(&params, &cfg.solver)?;
    out.add(TRAJECTORY_FILE, |w| traj.write_csv(w));

    let s = traj.last();
    let summary = format!(
        "t = {}: theta1 = {}, theta2 = {}, q = {}, dtheta1 = {}, dtheta2 = {}, dq = {} ({} rows)",
        traj.time(traj.len() - 1),
        s.theta1,
        s.theta2,
        s.q,
        s.dtheta1,
        s.dtheta2,
        s.dq,
        traj.len()
    );
    out.commit(summary)
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Outcome> {
    let params = cfg.rig_parameters()?;
    let mut out = Pending::new(cfg)?;
    let traj = simulate_params(&params, &cfg.solver)?;
    let data = add_noise(&observe(&traj), cfg.noise_sigma, cfg.seed);
    out.add(MEASUREMENTS_FILE, |w| data.write_csv(w));
    let summary = format!(
        "{} samples, sigma_n = {}, seed = {}",
        data.len(),
        cfg.noise_sigma,
        cfg.seed
    );
    out.commit(summary)
}

/// One row of the two-parameter verification sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verify2Row {
    pub sigma_n: f64,
    pub seed: u64,
    pub cm: f64,
    pub cm_deviation_pct: f64,
    pub ke: f64,
    pub ke_deviation_pct: f64,
    pub misfit: f64,
    pub iterations: usize,
    pub evals: usize,
}

/// Estimates `(cm, ke)` from synthetic data at `truth`, one row per noise
/// level. Row `i` draws its noise with `seed + i`; rows run concurrently.
pub fn verify2_rows(
    truth: &RigParameters,
    solver: &SolverConfig,
    sigmas: &[f64],
    seed: u64,
    guess: [f64; 2],
    max_iterations: usize,
) -> Result<Vec<Verify2Row>> {
    let clean = observe(&simulate_params(truth, solver)?);
    let mode = SearchMode::Full {
        max_iterations,
        tolerances: Tolerances::default(),
    };
    let run = |i: usize, sigma: f64| -> Result<Verify2Row> {
        let row_seed = seed.wrapping_add(i as u64);
        let data = add_noise(&clean, sigma, row_seed);
        // Noise-free data has no natural scale; any positive weight gives the same moves.
        let weight = if sigma > 0.0 { sigma } else { 1.0 };
        let prob = EstimationProblem::new(data, *truth, ParameterMask::all(), *solver, weight)?
            .with_free(&[Param::Cm, Param::Ke]);
        let est = estimate_pair(&prob, guess, mode)?;
        let (cm, ke) = (est.values[0], est.values[1]);
        Ok(Verify2Row {
            sigma_n: sigma,
            seed: row_seed,
            cm,
            cm_deviation_pct: 100.0 * (cm - truth.cm).abs() / truth.cm,
            ke,
            ke_deviation_pct: 100.0 * (ke - truth.ke).abs() / truth.ke,
            misfit: est.misfit,
            iterations: est.optimizer.iterations,
            evals: est.optimizer.evals,
        })
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = sigmas
            .iter()
            .enumerate()
            .map(|(i, &sigma)| scope.spawn(move || run(i, sigma)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("verification row panicked"))
            .collect()
    })
}

pub fn write_verify2_csv<W: std::io::Write>(
    rows: &[Verify2Row],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{VERIFY2_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.sigma_n,
            r.seed,
            r.cm,
            r.cm_deviation_pct,
            r.ke,
            r.ke_deviation_pct,
            r.misfit,
            r.iterations,
            r.evals
        )?;
    }
    Ok(())
}

pub fn cmd_verify2(cfg: &RunConfig) -> Result<Outcome> {
    let truth = cfg.rig_parameters()?;
    if truth.cm <= 0.0 || truth.ke <= 0.0 {
        bail!("verify2 needs positive cm and ke in the truth parameters");
    }
    let mut out = Pending::new(cfg)?;
    let rows = verify2_rows(
        &truth,
        &cfg.solver,
        &cfg.verify_sigmas,
        cfg.seed,
        cfg.verify_guess,
        cfg.verify_max_iterations,
    )?;
    out.add(VERIFY2_FILE, |w| write_verify2_csv(&rows, w));

    let mut summary = String::from("sigma_n      cm dev %      ke dev %\n");
    for r in &rows {
        let _ = writeln!(
            summary,
            "{:<10} {:>10.4} {:>12.6}",
            r.sigma_n, r.cm_deviation_pct, r.ke_deviation_pct
        );
    }
    out.commit(summary.trim_end().to_string())
}

fn build_estimation_problem(cfg: &RunConfig) -> Result<EstimationProblem> {
    match (&cfg.data, &cfg.synthetic_truth) {
        (Some(_), Some(_)) => bail!("--data and --synthetic-truth are mutually exclusive"),
        (None, None) => bail!("estimate9 needs a measurement file (--data) or a ground-truth parameter file (--synthetic-truth)"),
        (Some(path), None) => {
            let fixed = cfg.rig_parameters()?;
            let data = load_measurements(path)?;
            EstimationProblem::from_measurements(data, fixed, cfg.mask.clone(), cfg.misfit_sigma)
                .with_context(|| format!("cannot use measurement file {}", path.display()))
        }
        (None, Some(path)) => {
            // Parameters outside the mask are known exactly in a synthetic experiment.
            let truth = RigParameters::load(path)?;
            let traj = simulate_params(&truth, &cfg.solver)
                .with_context(|| format!("cannot simulate ground truth {}", path.display()))?;
            let data = add_noise(&observe(&traj), cfg.noise_sigma, cfg.seed);
            Ok(EstimationProblem::new(
                data,
                truth,
                cfg.mask.clone(),
                cfg.solver,
                cfg.misfit_sigma,
            )?)
        }
    }
}

fn write_fit_csv<W: std::io::Write>(
    data: &MeasurementSet,
    model: &MeasurementSet,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "t,theta1,theta2,dtheta1,dtheta2,theta1_model,theta2_model,dtheta1_model,dtheta2_model"
    )?;
    for k in 0..data.len() {
        write!(out, "{}", data.times[k])?;
        for ch in data.channels().iter().chain(model.channels().iter()) {
            write!(out, ",{}", ch[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn cmd_estimate9(cfg: &RunConfig) -> Result<Outcome> {
    let reference = cfg.reference_parameters()?;
    let prob = build_estimation_problem(cfg)?;
    let mut out = Pending::new(cfg)?;

    let state = estimate_ninefold(&prob, &cfg.guesses, &cfg.heuristic)?;
    let rows = deviation_report(&state.current, &cfg.guesses, &reference, &cfg.mask)?;
    let model = prob.predict(&state.current)?;

    out.add(REPORT_FILE, |w| write_report_csv(&rows, w));
    out.add(TRACE_FILE, |w| state.write_trace_csv(w));
    out.add(FIT_FILE, |w| write_fit_csv(&prob.data, &model, w));

    let mut summary = format!(
        "{} after {} cycles, misfit {} (initial {})\n",
        if state.steady { "steady" } else { "not steady" },
        state.cycle,
        state.misfit,
        state.initial_misfit
    );
    for r in &rows {
        let _ = writeln!(summary, "{r}");
    }
    out.commit(summary.trim_end().to_string())
}
