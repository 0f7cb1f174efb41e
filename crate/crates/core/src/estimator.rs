//! Least-squares parameter estimation.
//!
//! With i.i.d. zero-mean Gaussian measurement noise and a flat prior, the
//! maximum a posteriori estimate is the minimizer of
//!
//! ```text
//! ε(x; y) = 1/σn² · Σ_samples Σ_{i=1,2} [(θi − θ̂i(x))² + (θ̇i − θ̂̇i(x))²]
//! ```
//!
//! where the hatted quantities come from simulating the rig with parameters
//! `x`. Two drivers are provided: a direct minimization over any subset of
//! parameters, and the pairwise block-cycling heuristic that frees two
//! parameters at a time in a fixed cyclic order with a small iteration
//! budget per stage, repeated until the misfit stops changing.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::optimize::{nelder_mead, OptimizerResult, Tolerances};
use crate::rig::{assemble_system, Param, ParameterMask, RigParameters};
use crate::sim::{integrate_trapezoidal, SolverConfig, Trajectory};

/// Largest distance between a data timestamp and its solver grid point.
pub const GRID_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub data: MeasurementSet,
    pub fixed: RigParameters,
    pub mask: ParameterMask,
    pub solver: SolverConfig,
    pub sigma_n: f64,
    /// Free parameters in optimization-vector order.
    free: Vec<Param>,
    /// Solver grid index of each data sample.
    sample_index: Vec<usize>,
}

impl EstimationProblem {
    /// Builds a problem whose solver grid must contain every data timestamp.
    pub fn new(
        data: MeasurementSet,
        fixed: RigParameters,
        mask: ParameterMask,
        solver: SolverConfig,
        sigma_n: f64,
    ) -> Result<Self> {
        data.validate()?;
        solver.validate()?;
        if !(sigma_n > 0.0 && sigma_n.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "misfit sigma_n must be > 0, got {sigma_n}"
            )));
        }
        let steps = solver.steps();
        let sample_index = data
            .times
            .iter()
            .map(|&t| {
                let k = (t / solver.dt).round();
                let on_grid = k >= 0.0
                    && (k as usize) <= steps
                    && (k * solver.dt - t).abs() <= GRID_MATCH_TOL;
                if on_grid {
                    Ok(k as usize)
                } else {
                    Err(Error::InvalidProblem(format!(
                        "data time {t} is not on the solver grid (dt={}, t_end={})",
                        solver.dt, solver.t_end
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let free = mask.iter().collect();
        Ok(Self {
            data,
            fixed,
            mask,
            solver,
            sigma_n,
            free,
            sample_index,
        })
    }

    /// Builds the solver grid from the data's own time column, which must be
    /// uniformly spaced and aligned with `t = 0`.
    pub fn from_measurements(
        data: MeasurementSet,
        fixed: RigParameters,
        mask: ParameterMask,
        sigma_n: f64,
    ) -> Result<Self> {
        data.validate()?;
        let (t0, dt) = data.uniform_grid(GRID_MATCH_TOL).ok_or_else(|| {
            Error::InvalidProblem("non-uniform time grid in measurement data".into())
        })?;
        let t_end = *data.times.last().unwrap();
        let solver = SolverConfig::new(dt, t_end).map_err(|_| {
            Error::InvalidProblem(format!("cannot build a solver grid from t0={t0}, dt={dt}"))
        })?;
        Self::new(data, fixed, mask, solver, sigma_n)
    }

    pub fn free(&self) -> &[Param] {
        &self.free
    }

    /// Same problem with a different set of free parameters, optimized in the
    /// given order.
    pub fn with_free(&self, order: &[Param]) -> Self {
        Self {
            mask: ParameterMask::new(order.iter().copied()),
            free: order.to_vec(),
            ..self.clone()
        }
    }

    pub fn with_fixed(&self, fixed: RigParameters) -> Self {
        Self {
            fixed,
            ..self.clone()
        }
    }

    pub fn with_sigma(&self, sigma_n: f64) -> Self {
        Self {
            sigma_n,
            ..self.clone()
        }
    }

    /// Current values of the free parameters taken from `p`.
    pub fn values_of(&self, p: &RigParameters) -> Vec<f64> {
        self.free.iter().map(|&q| p.get(q)).collect()
    }

    /// `fixed` with the free parameters replaced by `values`.
    pub fn parameters_for(&self, values: &[f64]) -> RigParameters {
        let mut p = self.fixed;
        for (&q, &v) in self.free.iter().zip(values) {
            p.set(q, v);
        }
        p
    }

    /// Misfit of a candidate for the free parameters. Non-positive or
    /// non-finite candidates and failed integrations give `+∞`.
    pub fn misfit(&self, values: &[f64]) -> f64 {
        if values.len() != self.free.len() || values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return f64::INFINITY;
        }
        self.misfit_of(&self.parameters_for(values))
    }

    /// Misfit of a complete parameter set.
    pub fn misfit_of(&self, p: &RigParameters) -> f64 {
        match self.predict(p) {
            Ok(predicted) => {
                let m = weighted_misfit(&self.data, &predicted, self.sigma_n);
                if m.is_finite() {
                    m
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// Simulated observable channels at the data timestamps.
    pub fn predict(&self, p: &RigParameters) -> Result<MeasurementSet> {
        let traj = self.simulate(p)?;
        let pick = |f: fn(&crate::sim::StateVector) -> f64| -> Vec<f64> {
            self.sample_index
                .iter()
                .map(|&k| f(&traj.states[k]))
                .collect()
        };
        Ok(MeasurementSet {
            times: self.data.times.clone(),
            theta1: pick(|s| s.theta1),
            theta2: pick(|s| s.theta2),
            dtheta1: pick(|s| s.dtheta1),
            dtheta2: pick(|s| s.dtheta2),
            sigma_n: 0.0,
            seed: None,
        })
    }

    pub fn simulate(&self, p: &RigParameters) -> Result<Trajectory> {
        integrate_trapezoidal(&assemble_system(p)?, &self.solver)
    }
}

/// `1/σn² · Σ (data − predicted)²` over all samples of the four channels.
pub fn weighted_misfit(data: &MeasurementSet, predicted: &MeasurementSet, sigma_n: f64) -> f64 {
    let mut sum = 0.0;
    for (d, p) in data.channels().into_iter().zip(predicted.channels()) {
        for (a, b) in d.iter().zip(p) {
            let r = a - b;
            sum += r * r;
        }
    }
    sum / (sigma_n * sigma_n)
}

/// How the simplex is stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    /// Run to the given tolerances or iteration cap.
    Full {
        max_iterations: usize,
        tolerances: Tolerances,
    },
    /// Stop after a fixed number of simplex iterations.
    Budgeted(usize),
}

impl SearchMode {
    pub fn full() -> Self {
        SearchMode::Full {
            max_iterations: 2000,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub params: Vec<Param>,
    pub values: Vec<f64>,
    pub misfit: f64,
    pub optimizer: OptimizerResult,
}

impl Estimate {
    pub fn value(&self, p: Param) -> Option<f64> {
        self.params
            .iter()
            .position(|&q| q == p)
            .map(|i| self.values[i])
    }
}

/// Minimizes the misfit over the problem's free parameters from `guess`.
pub fn estimate(prob: &EstimationProblem, guess: &[f64], mode: SearchMode) -> Result<Estimate> {
    if guess.len() != prob.free.len() {
        return Err(Error::InvalidProblem(format!(
            "expected {} initial values, got {}",
            prob.free.len(),
            guess.len()
        )));
    }
    let objective = |x: &[f64]| prob.misfit(x);
    let (max_iterations, tolerances) = match mode {
        SearchMode::Full {
            max_iterations,
            tolerances,
        } => (max_iterations, tolerances),
        SearchMode::Budgeted(budget) => (budget, Tolerances::default()),
    };
    let result = nelder_mead(objective, guess, max_iterations, tolerances)?;
    Ok(Estimate {
        params: prob.free.clone(),
        values: result.best_point.clone(),
        misfit: result.best_value,
        optimizer: result,
    })
}

/// Two-parameter estimation; the mask must name exactly two parameters.
pub fn estimate_pair(
    prob: &EstimationProblem,
    guess: [f64; 2],
    mode: SearchMode,
) -> Result<Estimate> {
    if prob.free.len() != 2 {
        return Err(Error::InvalidProblem(format!(
            "pair estimation needs exactly 2 free parameters, got {}",
            prob.free.len()
        )));
    }
    estimate(prob, &guess, mode)
}

/// Cyclic order of parameter pairs freed by the heuristic. Consecutive pairs
/// share one parameter, so each stage starts from the previous estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSchedule {
    pairs: [(Param, Param); 9],
}

impl PairSchedule {
    pub const fn standard() -> Self {
        use Param::*;
        Self {
            pairs: [
                (Tf, Jm),
                (Jm, Cm),
                (Cm, Ke),
                (Ke, Kt),
                (Kt, Rm),
                (Rm, Lm),
                (Lm, Ks),
                (Ks, J1),
                (J1, Tf),
            ],
        }
    }

    pub fn pairs(&self) -> &[(Param, Param); 9] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Pair freed at a 1-based stage.
    pub fn stage(&self, stage: usize) -> (Param, Param) {
        self.pairs[(stage - 1) % self.pairs.len()]
    }

    pub fn next_stage(&self, stage: usize) -> usize {
        stage % self.pairs.len() + 1
    }
}

impl Default for PairSchedule {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicConfig {
    /// Simplex iterations per stage.
    pub budget: usize,
    /// Relative misfit change across one cycle that counts as steady state.
    pub steady_tol: f64,
    pub max_cycles: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            budget: 10,
            steady_tol: 1e-6,
            max_cycles: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub cycle: usize,
    pub stage: usize,
    pub pair: (Param, Param),
    /// Misfit at the stage's starting point.
    pub entry_misfit: f64,
    /// Best value returned by the optimizer, `+∞` if the stage failed.
    pub misfit: f64,
    pub iterations: usize,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationState {
    pub current: RigParameters,
    pub misfit: f64,
    pub initial_misfit: f64,
    /// Last completed stage, 1..=9.
    pub stage: usize,
    /// Completed cycles.
    pub cycle: usize,
    pub steady: bool,
    pub trace: Vec<TraceRecord>,
}

impl EstimationState {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cycle,stage,pair,misfit")?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{}-{},{}",
                r.cycle, r.stage, r.pair.0, r.pair.1, r.misfit
            )?;
        }
        Ok(())
    }

    pub fn save_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), |out| self.write_trace_csv(out))
    }
}

/// Pairwise block-cycling estimation of the problem's free parameters.
///
/// Each stage frees one pair of the schedule, starts the simplex from the
/// current estimates and keeps the best point after `cfg.budget`
/// iterations. After every full cycle the misfit is compared with the one
/// at the end of the previous cycle (the initial-guess misfit for the first
/// cycle); the run stops once the relative change is within `steady_tol` or
/// after `max_cycles` cycles. Pairs that touch a parameter outside the mask
/// are skipped.
pub fn estimate_ninefold(
    prob: &EstimationProblem,
    guesses: &RigParameters,
    cfg: &HeuristicConfig,
) -> Result<EstimationState> {
    if cfg.budget == 0 || cfg.max_cycles == 0 {
        return Err(Error::InvalidProblem(
            "budget and max_cycles must be >= 1".into(),
        ));
    }
    let mut current = prob.fixed;
    for p in prob.mask.iter() {
        let g = guesses.get(p);
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "initial guess for {p} must be finite and positive, got {g}"
            )));
        }
        current.set(p, g);
    }
    let initial_misfit = prob.misfit_of(&current);
    if !initial_misfit.is_finite() {
        return Err(Error::InvalidStart);
    }

    let schedule = PairSchedule::standard();
    let mut state = EstimationState {
        current,
        misfit: initial_misfit,
        initial_misfit,
        stage: 0,
        cycle: 0,
        steady: false,
        trace: Vec::new(),
    };
    let mut previous = initial_misfit;
    for cycle in 1..=cfg.max_cycles {
        for stage in 1..=schedule.len() {
            let pair = schedule.stage(stage);
            if !(prob.mask.contains(pair.0) && prob.mask.contains(pair.1)) {
                continue;
            }
            let sub = prob.with_fixed(state.current).with_free(&[pair.0, pair.1]);
            let start = [state.current.get(pair.0), state.current.get(pair.1)];
            let entry_misfit = state.misfit;
            let record = match estimate_pair(&sub, start, SearchMode::Budgeted(cfg.budget)) {
                Ok(est) => {
                    state.current.set(pair.0, est.values[0]);
                    state.current.set(pair.1, est.values[1]);
                    state.misfit = est.misfit;
                    TraceRecord {
                        cycle,
                        stage,
                        pair,
                        entry_misfit,
                        misfit: est.misfit,
                        iterations: est.optimizer.iterations,
                        evals: est.optimizer.evals,
                    }
                }
                Err(_) => TraceRecord {
                    cycle,
                    stage,
                    pair,
                    entry_misfit,
                    misfit: f64::INFINITY,
                    iterations: 0,
                    evals: 0,
                },
            };
            state.trace.push(record);
            state.stage = stage;
        }
        state.cycle = cycle;
        if (state.misfit - previous).abs() <= cfg.steady_tol * previous.max(1e-30) {
            state.steady = true;
            break;
        }
        previous = state.misfit;
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationRow {
    pub param: Param,
    pub initial_guess: f64,
    pub estimate: f64,
    pub reference: f64,
    /// `100·|estimate − reference| / |reference|`.
    pub relative_deviation_pct: f64,
}

/// Relative deviation of each masked parameter from a reference set.
pub fn deviation_report(
    estimates: &RigParameters,
    initial: &RigParameters,
    reference: &RigParameters,
    mask: &ParameterMask,
) -> Result<Vec<DeviationRow>> {
    mask.iter()
        .map(|p| {
            let r = reference.get(p);
            if r == 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "reference value for {p} is zero"
                )));
            }
            let e = estimates.get(p);
            Ok(DeviationRow {
                param: p,
                initial_guess: initial.get(p),
                estimate: e,
                reference: r,
                relative_deviation_pct: 100.0 * (e - r).abs() / r.abs(),
            })
        })
        .collect()
}

pub fn write_report_csv<W: Write>(rows: &[DeviationRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "parameter,initial_guess,estimate,reference,relative_deviation_pct"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.param, r.initial_guess, r.estimate, r.reference, r.relative_deviation_pct
        )?;
    }
    Ok(())
}

pub fn save_report_csv(rows: &[DeviationRow], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |out| write_report_csv(rows, out))
}

impl fmt::Display for DeviationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>3}  guess {:>12.5e}  estimate {:>12.5e}  reference {:>12.5e}  deviation {:>8.3}%",
            self.param.name(),
            self.initial_guess,
            self.estimate,
            self.reference,
            self.relative_deviation_pct
        )
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
