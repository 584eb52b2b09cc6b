use std::path::{Path, PathBuf};

use clap::Args;
use diffckm::convex::SolverConfig;
use diffckm::jpbto::{channel_by_name, corner_endpoints, random_endpoints, run_ao, AoConfig, AoOutcome, ChannelSources};
use diffckm::ratemodel::{calibrate_beta0, evaluate_plan_on_truth, LinkBudget, Mission, PlanEvaluation, StatisticalChannel};
use diffckm::regressor::CkmModel;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::workspace::SceneData;

/// Mission size, radio budget and solver limits shared by `plan` and `sweep`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ProblemArgs {
    /// Scene file written by `gen`; defaults to the output directory's copy.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Trained checkpoint for the ckm planner; defaults to `model_ckan.ckpt` in the output directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, short = 'M', default_value_t = 2)]
    pub uavs: usize,
    #[arg(long, short = 'N', default_value_t = 50)]
    pub slots: usize,
    /// Mission duration in seconds; the slot length is duration / slots.
    #[arg(long, short = 'T', default_value_t = 100.0)]
    pub duration: f64,
    /// Total transmit power in watts.
    #[arg(long, default_value_t = 10.0)]
    pub pmax: f64,
    /// Total bandwidth in hertz.
    #[arg(long, default_value_t = 10e6)]
    pub bmax: f64,
    /// Minimum per-slot rate in bits/s.
    #[arg(long, default_value_t = 0.0)]
    pub rmin: f64,
    #[arg(long, default_value_t = 30.0)]
    pub vmax: f64,
    /// Extra clearance beyond each obstacle radius in meters.
    #[arg(long, default_value_t = 5.0)]
    pub dmin: f64,
    #[arg(long, default_value_t = -174.0, allow_hyphen_values = true)]
    pub noise_dbm_hz: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 15)]
    pub l_max: usize,
    #[arg(long, default_value_t = 50)]
    pub i_max: usize,
    #[arg(long, default_value_t = 50)]
    pub j_max: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_ao: f64,
    /// Trust box half-width in meters; defaults to one slot of travel.
    #[arg(long)]
    pub trust_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Problem {
    pub budget: LinkBudget,
    pub ao: AoConfig,
    pub uavs: usize,
    pub slots: usize,
}

impl ProblemArgs {
    pub fn problem(&self) -> CliResult<Problem> {
        if self.slots == 0 || !(self.duration > 0.0) {
            return Err(CliError::Usage("slots and duration must be positive".into()));
        }
        let budget = LinkBudget {
            b_max_hz: self.bmax,
            p_max_w: self.pmax,
            n0_w_per_hz: 10f64.powf(self.noise_dbm_hz / 10.0) * 1e-3,
            r_min_bps: self.rmin,
            v_max_mps: self.vmax,
            tau_s: self.duration / self.slots as f64,
            epsilon_alpha: self.epsilon,
            d_min_m: self.dmin,
        };
        budget.validate(self.uavs)?;
        let ao = AoConfig {
            l_max: self.l_max,
            i_max: self.i_max,
            j_max: self.j_max,
            eps_ao: self.eps_ao,
            trust_radius_m: self.trust_radius,
            solver: SolverConfig::default(),
            ..AoConfig::default()
        };
        ao.validate()?;
        Ok(Problem { budget, ao, uavs: self.uavs, slots: self.slots })
    }

    pub fn model_path(&self, out: &Path) -> PathBuf {
        self.model.clone().unwrap_or_else(|| out.join("model_ckan.ckpt"))
    }
}

/// Channel inputs for every planner a command needs.
pub struct Channels {
    pub model: Option<CkmModel>,
    pub statistical: StatisticalChannel,
}

impl Channels {
    pub fn prepare(data: &SceneData, model_path: Option<&Path>) -> CliResult<Self> {
        let beta0 = calibrate_beta0(&data.scene, &data.truth)?;
        let model = model_path.map(CkmModel::load).transpose()?;
        if let Some(m) = &model {
            if m.meta().bounds != data.scene.bounds() {
                return Err(CliError::Usage("checkpoint was trained on a scene with different bounds".into()));
            }
        }
        Ok(Self { model, statistical: StatisticalChannel::for_scene(&data.scene, beta0)? })
    }

    pub fn sources(&self) -> ChannelSources<'_> {
        ChannelSources { model: self.model.as_ref(), statistical: Some(self.statistical) }
    }
}

pub struct PlanRun {
    pub mission: Mission,
    pub outcome: AoOutcome,
    pub evaluation: PlanEvaluation,
}

/// Endpoints from `seed`, or at opposite corners when absent.
pub fn mission_for(data: &SceneData, problem: &Problem, endpoint_seed: Option<u64>) -> CliResult<Mission> {
    let (starts, ends) = match endpoint_seed {
        Some(seed) => random_endpoints(&data.scene, problem.uavs, problem.slots, &problem.budget, seed)?,
        None => corner_endpoints(&data.scene, problem.uavs, &problem.budget)?,
    };
    Ok(Mission::for_scene(&data.scene, starts, ends, problem.slots))
}

/// Plan with `planner` and score the result on the ground truth.
pub fn plan_once(planner: &str, channels: &Channels, data: &SceneData, problem: &Problem, mission: Mission) -> CliResult<PlanRun> {
    let sources = channels.sources();
    let channel = channel_by_name(planner, &sources)?;
    let outcome = run_ao(channel.as_ref(), &mission, &problem.budget, &problem.ao)?;
    let evaluation = evaluate_plan_on_truth(&outcome.plan, &mission, &problem.budget, &data.scene, &data.truth)?;
    Ok(PlanRun { mission, outcome, evaluation })
}
