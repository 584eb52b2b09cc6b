use std::path::{Path, PathBuf};

use diffckm::grid::{write_grid_file, Grid, GridSidecar};
use diffckm::gridworld::{compute_ground_truth_ckm, EnvironmentScene, GroundTruthCkm, TruthConfig};

use crate::error::{CliError, CliResult};
use crate::svg::{heatmap_svg, Overlay, Palette};

pub const SCENE_FILE: &str = "scene.json";
pub const TRUTH_CONFIG_FILE: &str = "truth_config.json";
pub const TRUTH_GRID_FILE: &str = "truth_db.grid";

/// A scene and its recomputed ground truth.
pub struct SceneData {
    pub scene: EnvironmentScene,
    pub truth: GroundTruthCkm,
    pub scene_path: PathBuf,
    pub truth_config_path: PathBuf,
}

impl SceneData {
    /// Read `scene.json` and `truth_config.json` from the directory of `scene_path`.
    pub fn load(scene_path: &Path) -> CliResult<Self> {
        let scene = EnvironmentScene::load_json(scene_path)?;
        let truth_config_path = scene_path.with_file_name(TRUTH_CONFIG_FILE);
        let bytes = std::fs::read(&truth_config_path).map_err(|e| CliError::io(format!("reading {}", truth_config_path.display()), e))?;
        let truth_config: TruthConfig = serde_json::from_slice(&bytes)?;
        let truth = compute_ground_truth_ckm(&scene, &truth_config)?;
        Ok(Self { scene, truth, scene_path: scene_path.to_path_buf(), truth_config_path })
    }
}

pub fn scene_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join(SCENE_FILE))
}

/// Write a dB map as `.grid` with its palette recorded in the sidecar.
pub fn write_db_grid(path: &Path, scene: &EnvironmentScene, db: &Grid<f64>, quantity: &str) -> CliResult<Palette> {
    let palette = Palette::spanning(db);
    let mut sidecar = GridSidecar::new(db.rows(), db.cols(), scene.resolution_m, quantity, "dB");
    sidecar.notes = Some(palette.notes());
    write_grid_file(path, &sidecar, db.data())?;
    Ok(palette)
}

pub fn write_heatmap(path: &Path, scene: &EnvironmentScene, db: &Grid<f64>, overlay: &Overlay) -> CliResult<()> {
    let svg = heatmap_svg(scene, db, &Palette::spanning(db), overlay);
    write_text(path, &svg)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}
