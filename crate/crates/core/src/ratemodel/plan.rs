use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Bounds, EnvironmentScene, GroundTruthCkm, Obstacle};

use super::link::{average_rate, rate, LinkBudget};

/// Relative slack allowed on equality and bound constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative slack allowed on the minimum-rate constraint over predicted rates.
const RATE_TOL: f64 = 1e-6;

/// Fixed data of a planning problem: endpoints, slot count and keep-out disks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub starts: Vec<[f64; 2]>,
    pub ends: Vec<[f64; 2]>,
    pub slots: usize,
    pub obstacles: Vec<Obstacle>,
    pub bounds: Bounds,
}

impl Mission {
    pub fn uavs(&self) -> usize {
        self.starts.len()
    }

    pub fn for_scene(scene: &EnvironmentScene, starts: Vec<[f64; 2]>, ends: Vec<[f64; 2]>, slots: usize) -> Self {
        Self { starts, ends, slots, obstacles: scene.obstacles.clone(), bounds: scene.bounds() }
    }

    /// Clearance radius around obstacle `k`.
    pub fn keep_out(&self, k: usize, budget: &LinkBudget) -> f64 {
        self.obstacles[k].radius_m + budget.d_min_m
    }
}

/// Trajectories, bandwidth shares and powers, indexed `[uav][slot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub q: Vec<Vec<[f64; 2]>>,
    pub alpha: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    /// Rates under the planner's own channel model.
    pub predicted_rates: Vec<Vec<f64>>,
}

impl PlanState {
    pub fn uavs(&self) -> usize {
        self.q.len()
    }

    pub fn slots(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    /// Fill `predicted_rates` from per-slot gains.
    pub fn refresh_rates(&mut self, gains: &[Vec<f64>], budget: &LinkBudget) {
        self.predicted_rates = self
            .alpha
            .iter()
            .zip(&self.power)
            .zip(gains)
            .map(|((a, p), g)| a.iter().zip(p).zip(g).map(|((a, p), g)| rate(*a, *p, *g, budget)).collect())
            .collect();
    }

    pub fn predicted_min_rate(&self) -> f64 {
        min_average(&self.predicted_rates)
    }
}

fn min_average(rates: &[Vec<f64>]) -> f64 {
    rates.iter().map(|r| average_rate(r)).fold(f64::INFINITY, f64::min)
}

/// Every violated constraint of the plan, described; empty when feasible.
pub fn check_plan(plan: &PlanState, mission: &Mission, budget: &LinkBudget) -> Vec<String> {
    let mut out = Vec::new();
    let (m, n) = (mission.uavs(), mission.slots);
    let shaped = |v: usize, inner: &dyn Fn(usize) -> usize| v == m && (0..m).all(|i| inner(i) == n);
    if mission.ends.len() != m
        || !shaped(plan.q.len(), &|i| plan.q[i].len())
        || !shaped(plan.alpha.len(), &|i| plan.alpha[i].len())
        || !shaped(plan.power.len(), &|i| plan.power[i].len())
        || !shaped(plan.predicted_rates.len(), &|i| plan.predicted_rates[i].len())
    {
        out.push(format!("plan arrays are not {m} x {n}"));
        return out;
    }
    let tol = FEASIBILITY_TOL;
    for s in 0..n {
        for u in 0..m {
            let a = plan.alpha[u][s];
            if !(a >= budget.epsilon_alpha * (1.0 - tol) && a <= 1.0 + tol) {
                out.push(format!("(7a) alpha[{u}][{s}] = {a} outside [epsilon, 1]"));
            }
            if !(plan.power[u][s] >= -tol * budget.p_max_w) {
                out.push(format!("(7b) power[{u}][{s}] = {} is negative", plan.power[u][s]));
            }
        }
        let a_sum: f64 = (0..m).map(|u| plan.alpha[u][s]).sum();
        if !((a_sum - 1.0).abs() <= tol) {
            out.push(format!("(7b) bandwidth shares in slot {s} sum to {a_sum}"));
        }
        let p_sum: f64 = (0..m).map(|u| plan.power[u][s]).sum();
        if !((p_sum - budget.p_max_w).abs() <= tol * budget.p_max_w) {
            out.push(format!("(7b) powers in slot {s} sum to {p_sum}, not {}", budget.p_max_w));
        }
    }
    let step = budget.step_m();
    let b = &mission.bounds;
    let scale = b.span()[0].max(b.span()[1]);
    for u in 0..m {
        let q = &plan.q[u];
        for s in 1..n {
            let d = ((q[s][0] - q[s - 1][0]).powi(2) + (q[s][1] - q[s - 1][1]).powi(2)).sqrt();
            if !(d <= step * (1.0 + tol)) {
                out.push(format!("(7c) UAV {u} moves {d:.6} m in slot {s}, limit {step}"));
            }
        }
        let far = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() > tol * scale;
        if n > 0 && (far(q[0], mission.starts[u]) || far(q[n - 1], mission.ends[u])) {
            out.push(format!("(7d) UAV {u} endpoints are not pinned"));
        }
        for (s, p) in q.iter().enumerate() {
            let slack = tol * scale;
            if !(p[0] >= b.x_min - slack && p[0] <= b.x_max + slack && p[1] >= b.y_min - slack && p[1] <= b.y_max + slack) {
                out.push(format!("(7e) UAV {u} slot {s} at {p:?} leaves the area"));
            }
            for (k, o) in mission.obstacles.iter().enumerate() {
                let d = ((p[0] - o.center_xy[0]).powi(2) + (p[1] - o.center_xy[1]).powi(2)).sqrt();
                let need = mission.keep_out(k, budget);
                if !(d >= need * (1.0 - tol)) {
                    out.push(format!("(7f) UAV {u} slot {s} is {d:.6} m from obstacle {k}, needs {need:.6}"));
                }
            }
        }
        for (s, r) in plan.predicted_rates[u].iter().enumerate() {
            if !(*r >= budget.r_min_bps - RATE_TOL * budget.r_min_bps.max(1.0)) {
                out.push(format!("(7g) UAV {u} slot {s} predicted rate {r:.6e} below R_min"));
            }
        }
    }
    out
}

/// Rates of a plan re-measured on the ground-truth map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub truth_rates: Vec<Vec<f64>>,
    pub truth_average: Vec<f64>,
    pub truth_min_rate: f64,
    pub predicted_average: Vec<f64>,
    pub predicted_min_rate: f64,
}

/// Min over UAVs of the average rate with gains read from the nearest truth cell.
pub fn evaluate_plan_on_truth(
    plan: &PlanState,
    mission: &Mission,
    budget: &LinkBudget,
    scene: &EnvironmentScene,
    truth: &GroundTruthCkm,
) -> Result<PlanEvaluation> {
    let violations = check_plan(plan, mission, budget);
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    if truth.gains.shape() != scene.heights.shape() {
        return Err(Error::InvalidInput("truth map does not match the scene grid".into()));
    }
    let truth_rates: Vec<Vec<f64>> = (0..plan.uavs())
        .map(|u| {
            (0..plan.slots())
                .map(|s| {
                    let (r, c) = scene.cell_of(plan.q[u][s]);
                    rate(plan.alpha[u][s], plan.power[u][s], *truth.gains.get(r, c), budget)
                })
                .collect()
        })
        .collect();
    let truth_average: Vec<f64> = truth_rates.iter().map(|r| average_rate(r)).collect();
    let predicted_average: Vec<f64> = plan.predicted_rates.iter().map(|r| average_rate(r)).collect();
    Ok(PlanEvaluation {
        truth_min_rate: truth_average.iter().copied().fold(f64::INFINITY, f64::min),
        predicted_min_rate: predicted_average.iter().copied().fold(f64::INFINITY, f64::min),
        truth_rates,
        truth_average,
        predicted_average,
    })
}

/// Everything a plan file records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub planner: String,
    pub budget: LinkBudget,
    pub mission: Mission,
    pub plan: PlanState,
    pub evaluation: PlanEvaluation,
}

impl PlanReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
