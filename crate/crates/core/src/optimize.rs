//! Nelder-Mead downhill simplex minimizer.
//!
//! Coefficients are the classic reflection 1, expansion 2, contraction 1/2
//! and shrink 1/2. The initial simplex perturbs each coordinate of the start
//! point by 5% of its magnitude, or by 2.5e-4 when the coordinate is zero.
//! Non-finite objective values at trial points are treated as `+∞`, which
//! lets callers express constraints as penalties.

use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

const INITIAL_STEP: f64 = 0.05;
const INITIAL_STEP_AT_ZERO: f64 = 2.5e-4;

/// Stopping thresholds. Convergence requires both the value spread across
/// the simplex to fall below `f_tol·(|best| + 1e-30)` and the vertex
/// diameter to fall below `x_tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            f_tol: 1e-12,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The simplex collapsed below `x_tol` while its values still disagree.
    Stalled,
}

/// Transformation accepted in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Reflect,
    Expand,
    ContractOutside,
    ContractInside,
    Shrink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub iterations: usize,
    pub evals: usize,
    pub termination: Termination,
    /// Best value after each iteration.
    pub history: Vec<f64>,
    pub moves: Vec<Move>,
}

/// Vertices kept sorted ascending by value; ties keep insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexState {
    pub vertices: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iteration: usize,
    pub eval_count: usize,
}

fn penalized(value: f64) -> f64 {
    if value.is_finite() {
        value
    } else {
        f64::INFINITY
    }
}

impl SimplexState {
    /// Builds the initial simplex around `x0`.
    pub fn new<F: FnMut(&[f64]) -> f64>(objective: &mut F, x0: &[f64]) -> Result<Self> {
        if x0.is_empty() || !x0.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidStart);
        }
        let f0 = objective(x0);
        if !f0.is_finite() {
            return Err(Error::InvalidStart);
        }
        let n = x0.len();
        let mut vertices = vec![x0.to_vec()];
        let mut values = vec![f0];
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += if x0[i] != 0.0 {
                INITIAL_STEP * x0[i].abs()
            } else {
                INITIAL_STEP_AT_ZERO
            };
            values.push(penalized(objective(&v)));
            vertices.push(v);
        }
        let mut state = Self {
            vertices,
            values,
            iteration: 0,
            eval_count: n + 1,
        };
        state.sort();
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.vertices[0], self.values[0])
    }

    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    pub fn value_spread(&self) -> f64 {
        self.values[self.dim()] - self.values[0]
    }

    /// Largest max-norm distance from the best vertex.
    pub fn diameter(&self) -> f64 {
        let best = &self.vertices[0];
        self.vertices[1..]
            .iter()
            .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    pub fn check(&self, tol: &Tolerances) -> Option<Termination> {
        let small_x = self.diameter() < tol.x_tol;
        let small_f = self.value_spread() < tol.f_tol * (self.values[0].abs() + 1e-30);
        match (small_f, small_x) {
            (true, true) => Some(Termination::Converged),
            (false, true) => Some(Termination::Stalled),
            _ => None,
        }
    }

    /// Performs one reflect/expand/contract/shrink cycle.
    pub fn iterate<F: FnMut(&[f64]) -> f64>(&mut self, objective: &mut F) -> Move {
        let n = self.dim();
        let mut eval = |x: &[f64], count: &mut usize| {
            *count += 1;
            penalized(objective(x))
        };

        let mut centroid = vec![0.0; n];
        for v in &self.vertices[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let worst = self.vertices[n].clone();
        let f_worst = self.values[n];
        let along = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coef * (x - c))
                .collect()
        };

        let reflected = along(-REFLECT, &worst);
        let f_reflected = eval(&reflected, &mut self.eval_count);

        let (point, value, mv) = if f_reflected < self.values[0] {
            let expanded = along(-EXPAND, &worst);
            let f_expanded = eval(&expanded, &mut self.eval_count);
            if f_expanded < f_reflected {
                (expanded, f_expanded, Move::Expand)
            } else {
                (reflected, f_reflected, Move::Reflect)
            }
        } else if f_reflected < self.values[n - 1] {
            (reflected, f_reflected, Move::Reflect)
        } else if f_reflected < f_worst {
            let contracted = along(CONTRACT, &reflected);
            let f_contracted = eval(&contracted, &mut self.eval_count);
            if f_contracted <= f_reflected {
                (contracted, f_contracted, Move::ContractOutside)
            } else {
                self.shrink(objective);
                return Move::Shrink;
            }
        } else {
            let contracted = along(CONTRACT, &worst);
            let f_contracted = eval(&contracted, &mut self.eval_count);
            if f_contracted < f_worst {
                (contracted, f_contracted, Move::ContractInside)
            } else {
                self.shrink(objective);
                return Move::Shrink;
            }
        };

        self.vertices[n] = point;
        self.values[n] = value;
        self.sort();
        self.iteration += 1;
        mv
    }

    fn shrink<F: FnMut(&[f64]) -> f64>(&mut self, objective: &mut F) {
        let best = self.vertices[0].clone();
        for i in 1..self.vertices.len() {
            for (x, b) in self.vertices[i].iter_mut().zip(&best) {
                *x = b + SHRINK * (*x - b);
            }
            self.values[i] = penalized(objective(&self.vertices[i]));
        }
        self.eval_count += self.dim();
        self.sort();
        self.iteration += 1;
    }

    fn into_result(
        self,
        termination: Termination,
        history: Vec<f64>,
        moves: Vec<Move>,
    ) -> OptimizerResult {
        OptimizerResult {
            best_value: self.values[0],
            best_point: self.vertices.into_iter().next().unwrap(),
            iterations: self.iteration,
            evals: self.eval_count,
            termination,
            history,
            moves,
        }
    }
}

/// Minimizes `objective` from `x0`, stopping on convergence or after
/// `max_iterations` simplex iterations.
pub fn nelder_mead<F>(
    mut objective: F,
    x0: &[f64],
    max_iterations: usize,
    tol: Tolerances,
) -> Result<OptimizerResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if max_iterations == 0 {
        return Err(Error::InvalidProblem("max_iterations must be >= 1".into()));
    }
    let mut state = SimplexState::new(&mut objective, x0)?;
    let mut history = Vec::new();
    let mut moves = Vec::new();
    loop {
        if let Some(t) = state.check(&tol) {
            return Ok(state.into_result(t, history, moves));
        }
        if state.iteration >= max_iterations {
            return Ok(state.into_result(Termination::MaxIterations, history, moves));
        }
        moves.push(state.iterate(&mut objective));
        history.push(state.values[0]);
    }
}

/// [`nelder_mead`] with default tolerances and a fixed iteration budget.
pub fn nelder_mead_budgeted<F>(
    objective: F,
    x0: &[f64],
    iteration_budget: usize,
) -> Result<OptimizerResult>
where
    F: FnMut(&[f64]) -> f64,
{
    nelder_mead(objective, x0, iteration_budget, Tolerances::default())
}
