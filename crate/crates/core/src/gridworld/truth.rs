use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

use super::los::count_blockers;
use super::scene::{EnvironmentScene, Footprint};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Amplitude factor applied to the direct path once per obstructing building.
pub const NLOS_PENALTY: f64 = 0.1;
/// Amplitude factor of a single specular wall bounce.
pub const REFLECTION_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub frequency_hz: f64,
    pub n_reflections: u8,
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self { frequency_hz: 2.4e9, n_reflections: 0 }
    }
}

/// Ground-truth expected channel power gain per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCkm {
    pub gains: Grid<f64>,
    pub gains_db: Grid<f64>,
    pub frequency_hz: f64,
}

impl GroundTruthCkm {
    pub fn from_gains(gains: Grid<f64>, frequency_hz: f64) -> Result<Self> {
        if gains.data().iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::NonFinite("ground-truth gains must be positive and finite".into()));
        }
        let gains_db = gains.map(|g| 10.0 * g.log10());
        Ok(Self { gains, gains_db, frequency_hz })
    }

    pub fn rows(&self) -> usize {
        self.gains.rows()
    }

    pub fn cols(&self) -> usize {
        self.gains.cols()
    }
}

/// Free-space amplitude `c / (4 pi d f)`.
pub fn free_space_amplitude(distance_m: f64, frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * distance_m * frequency_hz)
}

struct Wall {
    axis: usize,
    position: f64,
    outward: f64,
    span: [f64; 2],
    height: f64,
}

fn walls_of(f: &Footprint, resolution_m: f64) -> [Wall; 4] {
    let ([x0, x1], [y0, y1]) = f.extent_m(resolution_m);
    let h = f.height_m;
    [
        Wall { axis: 0, position: x0, outward: -1.0, span: [y0, y1], height: h },
        Wall { axis: 0, position: x1, outward: 1.0, span: [y0, y1], height: h },
        Wall { axis: 1, position: y0, outward: -1.0, span: [x0, x1], height: h },
        Wall { axis: 1, position: y1, outward: 1.0, span: [x0, x1], height: h },
    ]
}

/// Image-source path length via `wall`, if the specular point lies on the wall.
fn reflected_distance(wall: &Wall, src: [f64; 3], dst: [f64; 3]) -> Option<f64> {
    let a = wall.axis;
    let o = 1 - a;
    if (src[a] - wall.position) * wall.outward <= 0.0 || (dst[a] - wall.position) * wall.outward <= 0.0 {
        return None;
    }
    let mut image = src;
    image[a] = 2.0 * wall.position - src[a];
    let t = (wall.position - image[a]) / (dst[a] - image[a]);
    let along = image[o] + t * (dst[o] - image[o]);
    let z = image[2] + t * (dst[2] - image[2]);
    if along < wall.span[0] || along > wall.span[1] || z < 0.0 || z > wall.height {
        return None;
    }
    Some(((dst[0] - image[0]).powi(2) + (dst[1] - image[1]).powi(2) + (dst[2] - image[2]).powi(2)).sqrt())
}

/// Expected channel power gain at every cell center, at the UAV altitude.
pub fn compute_ground_truth_ckm(scene: &EnvironmentScene, cfg: &TruthConfig) -> Result<GroundTruthCkm> {
    if !(cfg.frequency_hz > 0.0) {
        return Err(Error::InvalidInput("frequency must be positive".into()));
    }
    if cfg.n_reflections > 1 {
        return Err(Error::InvalidInput("at most one reflection is supported".into()));
    }
    let labels = scene.label_grid();
    let walls: Vec<Wall> = scene.footprints.iter().flat_map(|f| walls_of(f, scene.resolution_m)).collect();
    let bs = [scene.bs_xy[0], scene.bs_xy[1], scene.bs_height_m];
    let d_floor = 0.5 * scene.resolution_m;
    let cols = scene.cols();

    let data: Vec<f64> = (0..scene.rows() * cols)
        .into_par_iter()
        .map(|i| {
            let q = scene.cell_center(i / cols, i % cols);
            let uav = [q[0], q[1], scene.uav_height_m];
            let d0 = ((uav[0] - bs[0]).powi(2) + (uav[1] - bs[1]).powi(2) + (uav[2] - bs[2]).powi(2)).sqrt().max(d_floor);
            let blockers = count_blockers(scene, &labels, q);
            let direct = free_space_amplitude(d0, cfg.frequency_hz) * NLOS_PENALTY.powi(blockers as i32);
            let mut power = direct * direct;
            if cfg.n_reflections == 1 {
                for wall in &walls {
                    if let Some(d) = reflected_distance(wall, bs, uav) {
                        let a = REFLECTION_COEFFICIENT * free_space_amplitude(d.max(d_floor), cfg.frequency_hz);
                        power += a * a;
                    }
                }
            }
            power
        })
        .collect();
    GroundTruthCkm::from_gains(Grid::from_vec(scene.rows(), cols, data)?, cfg.frequency_hz)
}
