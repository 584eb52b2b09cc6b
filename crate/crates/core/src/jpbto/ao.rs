use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratemodel::{check_plan, LinkBudget, Mission, PlanState};

use super::allocation::{solve_bandwidth, solve_power};
use super::channel::ChannelModel;
use super::config::AoConfig;
use super::init::initial_trajectories;
use super::slp::InnerTrace;
use super::trajectory::solve_trajectory;

/// One outer iteration of the alternating optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoIteration {
    pub outer_iter: usize,
    /// Smallest average rate under the planner's channel, bits/s.
    pub objective_bps: f64,
    /// Normalized trajectory change of this iteration.
    pub delta_q: f64,
    pub power: InnerTrace,
    pub bandwidth: InnerTrace,
    pub trajectory: InnerTrace,
    pub plan: PlanState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoOutcome {
    pub planner: String,
    pub plan: PlanState,
    /// Entry 0 is the initialization.
    pub history: Vec<AoIteration>,
    pub converged: bool,
}

impl AoOutcome {
    pub fn outer_iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.objective_bps).collect()
    }

    /// Every inner loop monotone within `tol` (normalized rate units) and
    /// the outer sequence monotone within `tol` relative.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let outer = self.objectives().windows(2).all(|w| w[1] >= w[0] - tol * w[0].abs().max(1.0));
        let inner = self.history.iter().all(|h| h.power.is_monotone(tol) && h.bandwidth.is_monotone(tol) && h.trajectory.is_monotone(tol));
        outer && inner
    }

    pub fn max_tightness_error(&self) -> f64 {
        self.history.iter().flat_map(|h| [&h.power, &h.bandwidth, &h.trajectory]).map(|t| t.max_tightness_error).fold(0.0, f64::max)
    }
}

/// Gains of every waypoint under `channel`, `[uav][slot]`.
pub fn slot_gains(channel: &dyn ChannelModel, q: &[Vec<[f64; 2]>]) -> Result<Vec<Vec<f64>>> {
    q.par_iter().map(|row| row.iter().map(|p| channel.gain(*p)).collect()).collect()
}

fn assemble(q: Vec<Vec<[f64; 2]>>, alpha: Vec<Vec<f64>>, power: Vec<Vec<f64>>, gains: &[Vec<f64>], budget: &LinkBudget) -> PlanState {
    let mut plan = PlanState { q, alpha, power, predicted_rates: Vec::new() };
    plan.refresh_rates(gains, budget);
    plan
}

fn normalized_change(a: &[Vec<[f64; 2]>], b: &[Vec<[f64; 2]>], scale: f64) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sum::<f64>().sqrt() / scale
}

/// Alternate power, bandwidth and trajectory updates from equal shares and a
/// straight (or detoured) initial path until the trajectory settles.
pub fn run_ao(channel: &dyn ChannelModel, mission: &Mission, budget: &LinkBudget, cfg: &AoConfig) -> Result<AoOutcome> {
    cfg.validate()?;
    let m = mission.uavs();
    budget.validate(m)?;
    let n = mission.slots;
    let mut q = initial_trajectories(mission, budget)?;
    let mut alpha = vec![vec![1.0 / m as f64; n]; m];
    let mut power = vec![vec![budget.p_max_w / m as f64; n]; m];
    let span = mission.bounds.span();
    let scale = span[0].max(span[1]);

    let gains = slot_gains(channel, &q)?;
    let init = assemble(q.clone(), alpha.clone(), power.clone(), &gains, budget);
    let mut history = vec![AoIteration {
        outer_iter: 0,
        objective_bps: init.predicted_min_rate(),
        delta_q: 0.0,
        power: InnerTrace::default(),
        bandwidth: InnerTrace::default(),
        trajectory: InnerTrace::default(),
        plan: init,
    }];
    let mut converged = false;
    for l in 1..=cfg.l_max {
        let gains = slot_gains(channel, &q)?;
        let (p, power_trace) = solve_power(&gains, &alpha, &power, budget, cfg)?;
        power = p;
        let (a, bandwidth_trace) = solve_bandwidth(&gains, &power, &alpha, budget, cfg)?;
        alpha = a;
        let (next_q, trajectory_trace) = solve_trajectory(channel, mission, &alpha, &power, &q, budget, cfg)?;
        let delta_q = normalized_change(&next_q, &q, scale);
        q = next_q;
        let gains = slot_gains(channel, &q)?;
        let plan = assemble(q.clone(), alpha.clone(), power.clone(), &gains, budget);
        history.push(AoIteration {
            outer_iter: l,
            objective_bps: plan.predicted_min_rate(),
            delta_q,
            power: power_trace,
            bandwidth: bandwidth_trace,
            trajectory: trajectory_trace,
            plan,
        });
        if delta_q <= cfg.eps_ao {
            converged = true;
            break;
        }
    }
    let plan = history.last().expect("initial entry").plan.clone();
    let violations = check_plan(&plan, mission, budget);
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }
    Ok(AoOutcome { planner: channel.name().to_string(), plan, history, converged })
}
