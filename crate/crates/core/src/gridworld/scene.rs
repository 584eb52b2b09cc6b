use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Axis-aligned building footprint in cell indices, `rows x cols` cells
/// starting at `(row0, col0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub height_m: f64,
}

impl Footprint {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.rows && col >= self.col0 && col < self.col0 + self.cols
    }

    pub fn overlaps(&self, other: &Footprint) -> bool {
        self.row0 < other.row0 + other.rows
            && other.row0 < self.row0 + self.rows
            && self.col0 < other.col0 + other.cols
            && other.col0 < self.col0 + self.cols
    }

    /// Physical extent `[x0, x1] x [y0, y1]` in meters.
    pub fn extent_m(&self, resolution_m: f64) -> ([f64; 2], [f64; 2]) {
        (
            [self.row0 as f64 * resolution_m, (self.row0 + self.rows) as f64 * resolution_m],
            [self.col0 as f64 * resolution_m, (self.col0 + self.cols) as f64 * resolution_m],
        )
    }

    /// Circumscribed disk of the footprint rectangle.
    pub fn circumscribed_disk(&self, resolution_m: f64) -> Obstacle {
        let ([x0, x1], [y0, y1]) = self.extent_m(resolution_m);
        Obstacle { center_xy: [0.5 * (x0 + x1), 0.5 * (y0 + y1)], radius_m: 0.5 * ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt() }
    }
}

/// Planning obstacle: a disk that the UAVs must keep clear of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center_xy: [f64; 2],
    pub radius_m: f64,
}

/// Rectangular physical domain `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, q: [f64; 2]) -> bool {
        q[0] >= self.x_min && q[0] <= self.x_max && q[1] >= self.y_min && q[1] <= self.y_max
    }

    pub fn clip(&self, q: [f64; 2]) -> [f64; 2] {
        [q[0].clamp(self.x_min, self.x_max), q[1].clamp(self.y_min, self.y_max)]
    }

    pub fn span(&self) -> [f64; 2] {
        [self.x_max - self.x_min, self.y_max - self.y_min]
    }
}

/// The world model: building heights, base station pose and UAV altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentScene {
    pub width_m: f64,
    pub depth_m: f64,
    pub resolution_m: f64,
    pub heights: Grid<f64>,
    pub footprints: Vec<Footprint>,
    pub bs_xy: [f64; 2],
    pub bs_height_m: f64,
    pub uav_height_m: f64,
    pub obstacles: Vec<Obstacle>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub extent_m: f64,
    pub resolution_m: f64,
    pub building_count: usize,
    pub height_range_m: (f64, f64),
    /// Side length range of building footprints.
    pub footprint_range_m: (f64, f64),
    pub bs_height_m: f64,
    pub uav_height_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            extent_m: 2000.0,
            resolution_m: 7.8125,
            building_count: 30,
            height_range_m: (20.0, 90.0),
            footprint_range_m: (40.0, 160.0),
            bs_height_m: 25.0,
            uav_height_m: 100.0,
        }
    }
}

fn cell_count(extent_m: f64, resolution_m: f64) -> Result<usize> {
    if !(extent_m > 0.0 && resolution_m > 0.0) {
        return Err(Error::InvalidInput("extent and resolution must be positive".into()));
    }
    let n = (extent_m / resolution_m).round();
    if n < 1.0 || ((n * resolution_m - extent_m).abs() > 1e-9 * extent_m) {
        return Err(Error::InvalidInput(format!("extent {extent_m} m is not an integer multiple of resolution {resolution_m} m")));
    }
    Ok(n as usize)
}

/// Generate a seeded scene of non-overlapping rectangular buildings.
pub fn generate_scene(cfg: &SceneConfig) -> Result<EnvironmentScene> {
    let n = cell_count(cfg.extent_m, cfg.resolution_m)?;
    let (hmin, hmax) = cfg.height_range_m;
    let (fmin, fmax) = cfg.footprint_range_m;
    if !(hmin >= 0.0 && hmax >= hmin) || !(fmin > 0.0 && fmax >= fmin) {
        return Err(Error::InvalidInput("height and footprint ranges must be ordered and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let side_cells = |rng: &mut ChaCha8Rng| -> usize {
        let meters = if fmax > fmin { rng.gen_range(fmin..=fmax) } else { fmin };
        ((meters / cfg.resolution_m).round() as usize).clamp(1, n)
    };

    let max_attempts = 10 * cfg.building_count;
    let mut footprints: Vec<Footprint> = Vec::with_capacity(cfg.building_count);
    let mut attempts = 0;
    while footprints.len() < cfg.building_count && attempts < max_attempts {
        attempts += 1;
        let rows = side_cells(&mut rng);
        let cols = side_cells(&mut rng);
        let row0 = rng.gen_range(0..=n - rows);
        let col0 = rng.gen_range(0..=n - cols);
        let height_m = if hmax > hmin { rng.gen_range(hmin..=hmax) } else { hmin };
        let candidate = Footprint { row0, col0, rows, cols, height_m };
        if footprints.iter().all(|f| !f.overlaps(&candidate)) {
            footprints.push(candidate);
        }
    }
    if footprints.len() < cfg.building_count {
        return Err(Error::SceneTooDense { placed: footprints.len(), requested: cfg.building_count, attempts });
    }

    let heights = rasterize_footprints(n, n, &footprints);
    let free: Vec<usize> = heights.data().iter().enumerate().filter(|(_, h)| **h == 0.0).map(|(i, _)| i).collect();
    if free.is_empty() {
        return Err(Error::SceneTooDense { placed: footprints.len(), requested: cfg.building_count, attempts });
    }
    let bs_cell = free[rng.gen_range(0..free.len())];
    let bs_xy = [
        (bs_cell / n) as f64 * cfg.resolution_m + 0.5 * cfg.resolution_m,
        (bs_cell % n) as f64 * cfg.resolution_m + 0.5 * cfg.resolution_m,
    ];

    EnvironmentScene::from_footprints(
        cfg.extent_m,
        cfg.extent_m,
        cfg.resolution_m,
        footprints,
        bs_xy,
        cfg.bs_height_m,
        cfg.uav_height_m,
        cfg.seed,
    )
}

fn rasterize_footprints(rows: usize, cols: usize, footprints: &[Footprint]) -> Grid<f64> {
    let mut heights = Grid::filled(rows, cols, 0.0f64);
    for f in footprints {
        for r in f.row0..(f.row0 + f.rows).min(rows) {
            for c in f.col0..(f.col0 + f.cols).min(cols) {
                let h = heights.get_mut(r, c);
                *h = (*h).max(f.height_m);
            }
        }
    }
    heights
}

impl EnvironmentScene {
    /// Build a scene from explicit footprints; heights and obstacles are derived.
    #[allow(clippy::too_many_arguments)]
    pub fn from_footprints(
        width_m: f64,
        depth_m: f64,
        resolution_m: f64,
        footprints: Vec<Footprint>,
        bs_xy: [f64; 2],
        bs_height_m: f64,
        uav_height_m: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        let rows = cell_count(width_m, resolution_m)?;
        let cols = cell_count(depth_m, resolution_m)?;
        for f in &footprints {
            if f.rows == 0 || f.cols == 0 || f.row0 + f.rows > rows || f.col0 + f.cols > cols {
                return Err(Error::InvalidInput(format!("footprint {f:?} outside the {rows}x{cols} grid")));
            }
        }
        let heights = rasterize_footprints(rows, cols, &footprints);
        let obstacles = footprints.iter().map(|f| f.circumscribed_disk(resolution_m)).collect();
        let scene = Self { width_m, depth_m, resolution_m, heights, footprints, bs_xy, bs_height_m, uav_height_m, obstacles, rng_seed };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = cell_count(self.width_m, self.resolution_m)?;
        let cols = cell_count(self.depth_m, self.resolution_m)?;
        if self.heights.shape() != (rows, cols) {
            return Err(Error::ShapeMismatch { expected: vec![rows, cols], got: vec![self.heights.rows(), self.heights.cols()] });
        }
        if self.heights.data().iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
            return Err(Error::InvalidInput("building heights must be finite and non-negative".into()));
        }
        if !self.bounds().contains(self.bs_xy) {
            return Err(Error::InvalidInput(format!("base station {:?} outside the scene", self.bs_xy)));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.heights.rows()
    }

    pub fn cols(&self) -> usize {
        self.heights.cols()
    }

    pub fn bounds(&self) -> Bounds {
        Bounds { x_min: 0.0, x_max: self.width_m, y_min: 0.0, y_max: self.depth_m }
    }

    /// Center of cell `(row, col)` in meters; rows run along x.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(row as f64 + 0.5) * self.resolution_m, (col as f64 + 0.5) * self.resolution_m]
    }

    /// Cell containing `q`, with points on or past the far edge mapped to the last cell.
    pub fn cell_of(&self, q: [f64; 2]) -> (usize, usize) {
        let r = (q[0] / self.resolution_m).floor().clamp(0.0, (self.rows() - 1) as f64) as usize;
        let c = (q[1] / self.resolution_m).floor().clamp(0.0, (self.cols() - 1) as f64) as usize;
        (r, c)
    }

    /// Footprint label per cell: 0 for open ground, `k + 1` for footprint `k`.
    pub fn label_grid(&self) -> Grid<u32> {
        let mut labels = Grid::filled(self.rows(), self.cols(), 0u32);
        for (k, f) in self.footprints.iter().enumerate() {
            for r in f.row0..f.row0 + f.rows {
                for c in f.col0..f.col0 + f.cols {
                    *labels.get_mut(r, c) = k as u32 + 1;
                }
            }
        }
        labels
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let scene: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        scene.validate()?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_has_no_buildings() {
        let scene = generate_scene(&SceneConfig { building_count: 0, ..SceneConfig::default() }).unwrap();
        assert!(scene.heights.data().iter().all(|h| *h == 0.0));
        assert!(scene.obstacles.is_empty());
        assert_eq!(scene.rows(), 256);
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig { seed: 42, ..SceneConfig::default() };
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn thirty_buildings_are_pairwise_disjoint() {
        let scene =
            generate_scene(&SceneConfig { seed: 7, extent_m: 2000.0, resolution_m: 7.8125, building_count: 30, ..SceneConfig::default() })
                .unwrap();
        assert_eq!(scene.footprints.len(), 30);
        // Exhaustive check on explicit cell sets, independent of `overlaps`.
        let cell_sets: Vec<std::collections::HashSet<(usize, usize)>> = scene
            .footprints
            .iter()
            .map(|f| (f.row0..f.row0 + f.rows).flat_map(|r| (f.col0..f.col0 + f.cols).map(move |c| (r, c))).collect())
            .collect();
        for i in 0..cell_sets.len() {
            for j in i + 1..cell_sets.len() {
                assert!(cell_sets[i].is_disjoint(&cell_sets[j]), "footprints {i} and {j} overlap");
            }
        }
        assert_eq!(scene.obstacles.len(), 30);
        let (r, c) = scene.cell_of(scene.bs_xy);
        assert_eq!(*scene.heights.get(r, c), 0.0);
    }

    #[test]
    fn obstacle_disks_cover_their_footprints() {
        let scene = generate_scene(&SceneConfig { seed: 3, building_count: 12, ..SceneConfig::default() }).unwrap();
        for (f, o) in scene.footprints.iter().zip(&scene.obstacles) {
            let ([x0, x1], [y0, y1]) = f.extent_m(scene.resolution_m);
            for corner in [[x0, y0], [x0, y1], [x1, y0], [x1, y1]] {
                let d = ((corner[0] - o.center_xy[0]).powi(2) + (corner[1] - o.center_xy[1]).powi(2)).sqrt();
                assert!(d <= o.radius_m + 1e-9);
            }
        }
    }

    #[test]
    fn too_dense_is_reported() {
        let err = generate_scene(&SceneConfig {
            extent_m: 100.0,
            resolution_m: 10.0,
            building_count: 20,
            footprint_range_m: (60.0, 80.0),
            ..SceneConfig::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::SceneTooDense { .. }));
    }

    #[test]
    fn non_integral_extent_rejected() {
        let err = generate_scene(&SceneConfig { extent_m: 100.0, resolution_m: 7.0, ..SceneConfig::default() });
        assert!(err.is_err());
    }

    #[test]
    fn json_round_trip() {
        let scene = generate_scene(&SceneConfig {
            seed: 5,
            extent_m: 250.0,
            building_count: 3,
            footprint_range_m: (20.0, 40.0),
            ..SceneConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        scene.save_json(&path).unwrap();
        assert_eq!(EnvironmentScene::load_json(&path).unwrap(), scene);
    }
}
