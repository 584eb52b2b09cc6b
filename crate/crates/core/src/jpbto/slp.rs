use serde::{Deserialize, Serialize};

use crate::convex::{solve, ConeProgram, SolveStatus, SolverConfig};
use crate::error::Result;

/// First-order expansion of a scalar function around an anchor, kept in the
/// affine form `constant + coefficients . x[indices]` that enters a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub indices: Vec<usize>,
    pub anchor: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl Linearization {
    pub fn new(indices: Vec<usize>, anchor: Vec<f64>, value: f64, gradient: Vec<f64>) -> Self {
        let constant = value - gradient.iter().zip(&anchor).map(|(g, a)| g * a).sum::<f64>();
        Self { indices, anchor, value, gradient, constant }
    }

    /// Value of the affine model at the full variable vector `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.indices.iter().zip(&self.gradient).map(|(i, g)| g * x[*i]).sum::<f64>()
    }

    /// `|model(anchor) - value|`, relative to `max(1, |value|)`.
    pub fn tightness_error(&self) -> f64 {
        let at = self.constant + self.gradient.iter().zip(&self.anchor).map(|(g, a)| g * a).sum::<f64>();
        (at - self.value).abs() / self.value.abs().max(1.0)
    }

    pub fn terms(&self, scale: f64) -> Vec<(usize, f64)> {
        self.indices.iter().zip(&self.gradient).map(|(i, g)| (*i, scale * g)).collect()
    }
}

/// What one inner successive-approximation loop did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerTrace {
    /// True objective at the start and after every accepted step.
    pub objectives: Vec<f64>,
    pub max_tightness_error: f64,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub solver_failures: usize,
    pub converged: bool,
}

impl InnerTrace {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.objectives.windows(2).all(|w| w[1] >= w[0] - tol)
    }
}

/// A max-min subproblem solved by repeated local linear models.
pub(crate) trait Subproblem {
    /// The objective to maximize at `x`.
    fn objective(&self, x: &[f64]) -> Result<f64>;

    /// Whether `x` meets the constraints the local model only approximates.
    fn admissible(&self, x: &[f64]) -> Result<bool>;

    /// Local program around `x0` over `[x, gamma]`, maximizing `gamma`, with
    /// every variable kept within `radius` of `x0`.
    fn local_program(&self, x0: &[f64], radius: f64) -> Result<(ConeProgram, Vec<Linearization>)>;
}

/// Trust-region ascent: a step is kept only when the true objective improves;
/// kept steps widen the region and rejected ones halve it.
pub(crate) fn trust_region_ascent(
    problem: &dyn Subproblem,
    mut x: Vec<f64>,
    max_radius: f64,
    eps: f64,
    max_iter: usize,
    solver: &SolverConfig,
) -> Result<(Vec<f64>, InnerTrace)> {
    let mut trace = InnerTrace::default();
    let mut f = problem.objective(&x)?;
    trace.objectives.push(f);
    if x.is_empty() {
        trace.converged = true;
        return Ok((x, trace));
    }
    let mut radius = max_radius;
    while trace.iterations < max_iter {
        trace.iterations += 1;
        let (prog, lins) = problem.local_program(&x, radius)?;
        for l in &lins {
            trace.max_tightness_error = trace.max_tightness_error.max(l.tightness_error());
        }
        let mut start = x.clone();
        start.push(f - 1.0);
        let sol = solve(&prog, Some(&start), solver);
        if sol.status == SolveStatus::Infeasible || sol.x.iter().any(|v| !v.is_finite()) {
            trace.solver_failures += 1;
            radius *= 0.5;
            if radius <= eps {
                break;
            }
            continue;
        }
        if sol.status == SolveStatus::MaxIter {
            trace.solver_failures += 1;
        }
        let predicted = sol.objective - f;
        if predicted <= 1e-12 * f.abs().max(1.0) {
            trace.converged = true;
            break;
        }
        let candidate = sol.x[..x.len()].to_vec();
        let step = candidate.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let value = problem.objective(&candidate)?;
        if value > f && problem.admissible(&candidate)? {
            let ratio = (value - f) / predicted;
            x = candidate;
            f = value;
            trace.objectives.push(f);
            if step <= eps {
                trace.converged = true;
                break;
            }
            if ratio > 0.5 {
                radius = (2.0 * radius).min(max_radius);
            }
        } else {
            trace.rejected_steps += 1;
            radius *= 0.5;
            if radius <= eps {
                trace.converged = true;
                break;
            }
        }
    }
    Ok((x, trace))
}
