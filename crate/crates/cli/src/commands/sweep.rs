use std::fmt::Write as _;
use std::path::Path;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{ensure_dir, ManifestBuilder};
use crate::pipeline::{mission_for, plan_once, Channels, ProblemArgs};
use crate::workspace::{scene_path, write_text, SceneData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Pmax,
    Bmax,
    Slots,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Pmax => "pmax",
            SweepParam::Bmax => "bmax",
            SweepParam::Slots => "slots",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Grid points, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Runs per grid point, each with its own endpoint seed.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, value_delimiter = ',', default_value = "ckm,sc")]
    pub planners: Vec<String>,
    /// Repeat `r` draws its endpoints from seed `seed_base + r`.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[command(flatten)]
    pub problem: ProblemArgs,
}

/// Outcome of one sweep run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub value: f64,
    pub planner: String,
    pub seed: u64,
    pub result: Result<f64, String>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn apply(args: &ProblemArgs, param: SweepParam, value: f64) -> CliResult<ProblemArgs> {
    let mut a = args.clone();
    match param {
        SweepParam::Pmax => a.pmax = value,
        SweepParam::Bmax => a.bmax = value,
        SweepParam::Slots => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Usage(format!("slot count must be a positive integer, got {value}")));
            }
            a.slots = value as usize;
        }
    }
    Ok(a)
}

pub fn run(args: &SweepArgs, out: &Path) -> CliResult<()> {
    let out = ensure_dir(out)?;
    if args.repeats == 0 || args.values.is_empty() || args.planners.is_empty() {
        return Err(CliError::Usage("sweep needs values, planners and at least one repeat".into()));
    }
    let problems = args.values.iter().map(|v| apply(&args.problem, args.param, *v)?.problem()).collect::<CliResult<Vec<_>>>()?;
    let mut manifest = ManifestBuilder::new("sweep", &out, args)?;
    for r in 0..args.repeats {
        manifest.seed(&format!("endpoints_{r}"), args.seed_base + r as u64);
    }
    let data = SceneData::load(&scene_path(&args.problem.scene, &out))?;
    manifest.input(&data.scene_path)?;
    manifest.input(&data.truth_config_path)?;
    let model_path = args.planners.iter().any(|p| p == "ckm").then(|| args.problem.model_path(&out));
    if let Some(p) = &model_path {
        manifest.input(p)?;
    }
    let channels = Channels::prepare(&data, model_path.as_deref())?;

    let jobs: Vec<(usize, &String, u64)> = (0..problems.len())
        .flat_map(|i| args.planners.iter().flat_map(move |p| (0..args.repeats).map(move |r| (i, p, args.seed_base + r as u64))))
        .collect();
    let records: Vec<RunRecord> = manifest.time("runs", || {
        jobs.par_iter()
            .map(|&(i, planner, seed)| {
                let problem = &problems[i];
                let result = mission_for(&data, problem, Some(seed))
                    .and_then(|m| plan_once(planner, &channels, &data, problem, m))
                    .map(|run| run.evaluation.truth_min_rate)
                    .map_err(|e| e.to_string());
                RunRecord { value: args.values[i], planner: planner.clone(), seed, result }
            })
            .collect()
    });

    let name = args.param.name();
    let mut runs_csv = String::from("param,value,planner,seed,status,truth_min_rate\n");
    for r in &records {
        match &r.result {
            Ok(v) => {
                let _ = writeln!(runs_csv, "{name},{},{},{},ok,{v:.9e}", r.value, r.planner, r.seed);
            }
            Err(e) => {
                eprintln!("run {name}={} planner={} seed={} failed: {e}", r.value, r.planner, r.seed);
                let _ = writeln!(runs_csv, "{name},{},{},{},\"{}\",", r.value, r.planner, r.seed, e.replace('"', "'"));
            }
        }
    }
    let mut csv = String::from("param,value,planner,runs,failures,mean_min_rate,std_min_rate,min_min_rate,max_min_rate\n");
    for (i, value) in args.values.iter().enumerate() {
        for planner in &args.planners {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.planner == *planner && r.value == args.values[i]).collect();
            let ok: Vec<f64> = group.iter().filter_map(|r| r.result.as_ref().ok().copied()).collect();
            let (mean, std) = mean_std(&ok);
            let lo = ok.iter().copied().fold(f64::NAN, f64::min);
            let hi = ok.iter().copied().fold(f64::NAN, f64::max);
            let _ =
                writeln!(csv, "{name},{value},{planner},{},{},{mean:.9e},{std:.9e},{lo:.9e},{hi:.9e}", ok.len(), group.len() - ok.len());
            println!("{name}={value} {planner}: mean {mean:.6e} bit/s, std {std:.3e}, {} of {} runs ok", ok.len(), group.len());
        }
    }
    let path = out.join(format!("sweep_{name}.csv"));
    write_text(&path, &csv)?;
    manifest.output(&path)?;
    let runs_path = out.join(format!("sweep_{name}_runs.csv"));
    write_text(&runs_path, &runs_csv)?;
    manifest.output(&runs_path)?;
    manifest.finish(&out.join(format!("manifest_sweep_{name}.json")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_spread() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 2.0);
        assert!(mean_std(&[]).0.is_nan());
    }
}
