//! Rate arithmetic shared by the planner and the truth evaluator, the
//! statistical-channel baseline, and plan feasibility checking.

mod link;
mod plan;
mod statistical;

pub use link::{average_rate, rate, rate_d2_alpha, rate_d_alpha, rate_d_gain, rate_d_power, LinkBudget, DBM_PER_HZ_174};
pub use plan::{check_plan, evaluate_plan_on_truth, Mission, PlanEvaluation, PlanReport, PlanState, FEASIBILITY_TOL};
pub use statistical::{calibrate_beta0, sc_gain, sc_gain_gradient, StatisticalChannel};
