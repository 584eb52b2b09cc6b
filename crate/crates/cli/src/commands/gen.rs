use std::path::Path;

use clap::Args;
use diffckm::gridworld::{compute_ground_truth_ckm, generate_scene, SceneConfig, TruthConfig};
use serde::Serialize;

use crate::error::CliResult;
use crate::manifest::{ensure_dir, ManifestBuilder};
use crate::svg::Overlay;
use crate::workspace::{write_db_grid, write_heatmap, write_text, SCENE_FILE, TRUTH_CONFIG_FILE, TRUTH_GRID_FILE};

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side length of the square area in meters.
    #[arg(long, default_value_t = 2000.0)]
    pub extent: f64,
    #[arg(long, default_value_t = 7.8125)]
    pub resolution: f64,
    #[arg(long, default_value_t = 30)]
    pub buildings: usize,
    #[arg(long, default_value_t = 20.0)]
    pub min_height: f64,
    #[arg(long, default_value_t = 90.0)]
    pub max_height: f64,
    #[arg(long, default_value_t = 40.0)]
    pub min_footprint: f64,
    #[arg(long, default_value_t = 160.0)]
    pub max_footprint: f64,
    #[arg(long, default_value_t = 25.0)]
    pub bs_height: f64,
    #[arg(long, default_value_t = 100.0)]
    pub uav_height: f64,
    #[arg(long, default_value_t = 2.4e9)]
    pub frequency: f64,
    #[arg(long, default_value_t = 0)]
    pub reflections: u8,
}

pub fn run(args: &GenArgs, out: &Path) -> CliResult<()> {
    let out = ensure_dir(out)?;
    let mut manifest = ManifestBuilder::new("gen", &out, args)?;
    manifest.seed("scene", args.seed);
    let scene_cfg = SceneConfig {
        seed: args.seed,
        extent_m: args.extent,
        resolution_m: args.resolution,
        building_count: args.buildings,
        height_range_m: (args.min_height, args.max_height),
        footprint_range_m: (args.min_footprint, args.max_footprint),
        bs_height_m: args.bs_height,
        uav_height_m: args.uav_height,
    };
    let truth_cfg = TruthConfig { frequency_hz: args.frequency, n_reflections: args.reflections };
    let scene = manifest.time("scene", || generate_scene(&scene_cfg))?;
    let truth = manifest.time("truth", || compute_ground_truth_ckm(&scene, &truth_cfg))?;

    let scene_path = out.join(SCENE_FILE);
    scene.save_json(&scene_path)?;
    manifest.output(&scene_path)?;
    let cfg_path = out.join(TRUTH_CONFIG_FILE);
    write_text(&cfg_path, &serde_json::to_string_pretty(&truth_cfg)?)?;
    manifest.output(&cfg_path)?;
    let grid_path = out.join(TRUTH_GRID_FILE);
    write_db_grid(&grid_path, &scene, &truth.gains_db, "ground-truth channel gain")?;
    manifest.grid_output(&grid_path)?;
    let svg_path = out.join("truth_heatmap.svg");
    let overlay =
        Overlay { obstacles: scene.obstacles.clone(), title: Some(format!("ground-truth gain, seed {}", args.seed)), ..Overlay::default() };
    write_heatmap(&svg_path, &scene, &truth.gains_db, &overlay)?;
    manifest.output(&svg_path)?;
    manifest.finish(&out.join("manifest_gen.json"))?;

    println!(
        "scene {}x{} cells, {} buildings, BS at ({:.1}, {:.1}) m",
        scene.rows(),
        scene.cols(),
        scene.footprints.len(),
        scene.bs_xy[0],
        scene.bs_xy[1]
    );
    println!("wrote {}", out.display());
    Ok(())
}
