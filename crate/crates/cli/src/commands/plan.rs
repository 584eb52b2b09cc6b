use std::fmt::Write as _;
use std::path::Path;

use clap::Args;
use diffckm::ratemodel::{evaluate_plan_on_truth, PlanReport};
use serde::Serialize;

use crate::error::CliResult;
use crate::manifest::{ensure_dir, ManifestBuilder};
use crate::pipeline::{mission_for, plan_once, Channels, PlanRun, ProblemArgs};
use crate::svg::Overlay;
use crate::workspace::{scene_path, write_heatmap, write_text, SceneData};

pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    /// Channel the planner optimizes against: ckm (trained map) or sc (distance-only).
    #[arg(long, default_value = "ckm")]
    pub planner: String,
    /// Draw random endpoints from this seed instead of using opposite corners.
    #[arg(long)]
    pub endpoint_seed: Option<u64>,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

pub fn plan_file(out: &Path, planner: &str) -> std::path::PathBuf {
    out.join(format!("plan_{planner}.json"))
}

pub fn run(args: &PlanArgs, out: &Path) -> CliResult<()> {
    let out = ensure_dir(out)?;
    let problem = args.problem.problem()?;
    let mut manifest = ManifestBuilder::new("plan", &out, args)?;
    if let Some(seed) = args.endpoint_seed {
        manifest.seed("endpoints", seed);
    }
    let data = SceneData::load(&scene_path(&args.problem.scene, &out))?;
    manifest.input(&data.scene_path)?;
    manifest.input(&data.truth_config_path)?;
    let model_path = (args.planner == "ckm").then(|| args.problem.model_path(&out));
    if let Some(p) = &model_path {
        manifest.input(p)?;
    }
    let channels = Channels::prepare(&data, model_path.as_deref())?;
    let mission = mission_for(&data, &problem, args.endpoint_seed)?;
    let PlanRun { mission, outcome, evaluation } =
        manifest.time("plan", || plan_once(&args.planner, &channels, &data, &problem, mission))?;

    let planner = args.planner.as_str();
    let report = PlanReport {
        planner: planner.into(),
        budget: problem.budget,
        mission: mission.clone(),
        plan: outcome.plan.clone(),
        evaluation: evaluation.clone(),
    };
    let plan_path = plan_file(&out, planner);
    report.save_json(&plan_path)?;
    manifest.output(&plan_path)?;

    let mut csv = String::from("outer_iter,internal_objective,truth_min_rate\n");
    for it in &outcome.history {
        let truth =
            evaluate_plan_on_truth(&it.plan, &mission, &problem.budget, &data.scene, &data.truth).map_or(f64::NAN, |e| e.truth_min_rate);
        let _ = writeln!(csv, "{},{:.9e},{:.9e}", it.outer_iter, it.objective_bps, truth);
    }
    let history_path = out.join(format!("history_{planner}.csv"));
    write_text(&history_path, &csv)?;
    manifest.output(&history_path)?;

    let svg_path = out.join(format!("trajectory_{planner}.svg"));
    let overlay = Overlay {
        trajectories: outcome.plan.q.clone(),
        obstacles: data.scene.obstacles.clone(),
        clearance_m: problem.budget.d_min_m,
        title: Some(format!("{planner} plan, truth min rate {:.4e} bit/s", evaluation.truth_min_rate)),
    };
    write_heatmap(&svg_path, &data.scene, &data.truth.gains_db, &overlay)?;
    manifest.output(&svg_path)?;

    println!(
        "{planner}: {} outer iterations{}, predicted min rate {:.6e} bit/s, truth min rate {:.6e} bit/s",
        outcome.outer_iterations(),
        if outcome.converged { "" } else { " (iteration limit)" },
        evaluation.predicted_min_rate,
        evaluation.truth_min_rate
    );
    if let Some(row) = comparison_row(&out)? {
        let path = out.join(COMPARISON_FILE);
        write_text(&path, &format!("ckm_truth_min_rate,sc_truth_min_rate,relative_gain\n{row}\n"))?;
        manifest.output(&path)?;
        println!("comparison ckm vs sc: {row}");
    }
    manifest.finish(&out.join(format!("manifest_plan_{planner}.json")))?;
    Ok(())
}

/// Head-to-head row when both planners have solved the same mission in `out`.
fn comparison_row(out: &Path) -> CliResult<Option<String>> {
    let (ckm, sc) = (plan_file(out, "ckm"), plan_file(out, "sc"));
    if !ckm.exists() || !sc.exists() {
        return Ok(None);
    }
    let (a, b) = (PlanReport::load_json(&ckm)?, PlanReport::load_json(&sc)?);
    if a.mission != b.mission || a.budget != b.budget {
        return Ok(None);
    }
    let (ra, rb) = (a.evaluation.truth_min_rate, b.evaluation.truth_min_rate);
    Ok(Some(format!("{ra:.9e},{rb:.9e},{:.6}", (ra - rb) / rb)))
}
