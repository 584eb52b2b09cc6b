use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{read_grid_file, write_grid_file, Grid, GridSidecar};
use crate::gridworld::{Bounds, EnvironmentScene};
use crate::numerics::Tensor;

use super::measurements::MeasurementSet;

pub const FEATURE_CHANNELS: usize = 5;
pub const CHANNEL_NAMES: [&str; FEATURE_CHANNELS] = ["bs_position", "building_heights", "sampled_gain", "los", "knn_gain"];

/// Min-max map between dB gains and the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainNormalization {
    pub db_min: f64,
    pub db_max: f64,
}

impl GainNormalization {
    pub fn from_db_values(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("dB gain".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(Error::InvalidInput("no gains to normalize".into()));
        }
        Ok(Self { db_min: lo, db_max: hi })
    }

    pub fn from_measurements(ms: &MeasurementSet) -> Result<Self> {
        Self::from_db_values(ms.entries.iter().map(|e| e.gain_db()))
    }

    pub fn span(&self) -> f64 {
        self.db_max - self.db_min
    }

    pub fn normalize(&self, db: f64) -> f64 {
        let span = self.span();
        if span > 0.0 {
            (db - self.db_min) / span
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, unit: f64) -> f64 {
        self.db_min + unit * self.span()
    }

    pub fn to_linear(&self, unit: f64) -> f64 {
        10f64.powf(self.denormalize(unit) / 10.0)
    }
}

/// The stacked conditional input, `[channels x rows x cols]`, all values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub channels: Tensor,
    /// Per-channel `(min, max)` of the raw values before normalization.
    pub norm_params: Vec<(f64, f64)>,
    pub resolution_m: f64,
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Assemble the five normalized channels in the fixed order of [`CHANNEL_NAMES`].
pub fn build_feature_stack(scene: &EnvironmentScene, ms: &MeasurementSet, los: &Grid<u8>, knn: &Grid<f64>) -> Result<FeatureStack> {
    let shape = scene.heights.shape();
    for (name, got) in [("measurements", (ms.rows, ms.cols)), ("los", los.shape()), ("knn", knn.shape())] {
        if got != shape {
            return Err(Error::ShapeMismatch { expected: vec![shape.0, shape.1], got: vec![got.0, got.1] })
                .map_err(|e| Error::InvalidInput(format!("{name}: {e}")));
        }
    }
    let (rows, cols) = shape;
    let plane = rows * cols;
    let mut data = vec![0.0; FEATURE_CHANNELS * plane];

    let (br, bc) = scene.cell_of(scene.bs_xy);
    data[br * cols + bc] = 1.0;

    let height_range = min_max(scene.heights.data().iter().copied());
    for (i, h) in scene.heights.data().iter().enumerate() {
        data[plane + i] = scale(*h, height_range);
    }

    let gain_norm = GainNormalization::from_measurements(ms)?;
    let gain_range = (gain_norm.db_min, gain_norm.db_max);
    for e in &ms.entries {
        data[2 * plane + e.row * cols + e.col] = scale(e.gain_db(), gain_range);
    }

    for (i, v) in los.data().iter().enumerate() {
        data[3 * plane + i] = f64::from(*v);
    }

    for (i, v) in knn.data().iter().enumerate() {
        data[4 * plane + i] = scale(*v, gain_range);
    }

    Ok(FeatureStack {
        channels: Tensor::from_vec(&[FEATURE_CHANNELS, rows, cols], data)?,
        norm_params: vec![(0.0, 1.0), height_range, gain_range, (0.0, 1.0), gain_range],
        resolution_m: scene.resolution_m,
    })
}

impl FeatureStack {
    pub fn rows(&self) -> usize {
        self.channels.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.channels.shape()[2]
    }

    pub fn gain_normalization(&self) -> GainNormalization {
        let (db_min, db_max) = self.norm_params[2];
        GainNormalization { db_min, db_max }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut sidecar = GridSidecar::new(self.rows(), self.cols(), self.resolution_m, "feature_stack", "normalized");
        sidecar.channels = Some(self.channels.shape()[0]);
        sidecar.channel_names = Some(CHANNEL_NAMES.iter().map(|s| s.to_string()).collect());
        sidecar.notes = Some(serde_json::json!({ "norm_params": self.norm_params }));
        write_grid_file(path, &sidecar, self.channels.data())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (sidecar, values) = read_grid_file(path)?;
        let names = sidecar.channel_names.clone().unwrap_or_default();
        if names != CHANNEL_NAMES {
            return Err(Error::Format(format!("unexpected feature channel order {names:?}")));
        }
        let norm_params: Vec<(f64, f64)> = sidecar
            .notes
            .as_ref()
            .and_then(|n| n.get("norm_params"))
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()?
            .ok_or_else(|| Error::Format("feature stack sidecar lacks norm_params".into()))?;
        Ok(Self {
            channels: Tensor::from_vec(&[FEATURE_CHANNELS, sidecar.rows, sidecar.cols], values)?,
            norm_params,
            resolution_m: sidecar.resolution_m,
        })
    }
}

/// Affine map of a physical position onto the unit square.
pub fn normalize_location(q: [f64; 2], extent: &Bounds) -> Result<[f64; 2]> {
    if !extent.contains(q) {
        return Err(Error::InvalidInput(format!("location {q:?} outside {extent:?}")));
    }
    let span = extent.span();
    Ok([(q[0] - extent.x_min) / span[0], (q[1] - extent.y_min) / span[1]])
}

pub fn denormalize_location(u: [f64; 2], extent: &Bounds) -> [f64; 2] {
    let span = extent.span();
    [extent.x_min + u[0] * span[0], extent.y_min + u[1] * span[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{knn_interpolate, sample_measurements};
    use crate::gridworld::{compute_ground_truth_ckm, compute_los_map, generate_scene, GroundTruthCkm, SceneConfig, TruthConfig};
    use proptest::prelude::*;

    fn small_scene() -> EnvironmentScene {
        generate_scene(&SceneConfig {
            seed: 2,
            extent_m: 320.0,
            resolution_m: 10.0,
            building_count: 3,
            footprint_range_m: (30.0, 60.0),
            ..SceneConfig::default()
        })
        .unwrap()
    }

    fn stack_for(scene: &EnvironmentScene, truth: &GroundTruthCkm) -> FeatureStack {
        let ms = sample_measurements(truth, 0.05, 4).unwrap();
        let knn = knn_interpolate(&ms, 3, scene.heights.shape()).unwrap();
        build_feature_stack(scene, &ms, &compute_los_map(scene), &knn).unwrap()
    }

    #[test]
    fn channels_are_in_unit_range_and_bs_is_one_hot() {
        let scene = small_scene();
        let truth = compute_ground_truth_ckm(&scene, &TruthConfig::default()).unwrap();
        let stack = stack_for(&scene, &truth);
        assert_eq!(stack.channels.shape(), &[5, 32, 32]);
        assert!(stack.channels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(stack.channels.channel(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn equal_gains_normalize_to_zero() {
        let scene = small_scene();
        let flat = GroundTruthCkm::from_gains(Grid::filled(32, 32, 1e-8), 2.4e9).unwrap();
        let stack = stack_for(&scene, &flat);
        assert!(stack.channels.channel(2).iter().all(|v| *v == 0.0));
        assert!(stack.channels.channel(4).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unsampled_cells_are_zero() {
        let scene = small_scene();
        let truth = compute_ground_truth_ckm(&scene, &TruthConfig::default()).unwrap();
        let ms = sample_measurements(&truth, 0.05, 4).unwrap();
        let stack = stack_for(&scene, &truth);
        for (r, c) in ms.complement() {
            assert_eq!(stack.channels.channel(2)[r * 32 + c], 0.0);
        }
    }

    #[test]
    fn scaling_gains_changes_nothing() {
        let scene = small_scene();
        let truth = compute_ground_truth_ckm(&scene, &TruthConfig::default()).unwrap();
        let scaled = GroundTruthCkm::from_gains(truth.gains.map(|g| g * 1024.0), truth.frequency_hz).unwrap();
        let a = stack_for(&scene, &truth);
        let b = stack_for(&scene, &scaled);
        for (x, y) in a.channels.data().iter().zip(b.channels.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn file_round_trip_preserves_bits() {
        let scene = small_scene();
        let truth = compute_ground_truth_ckm(&scene, &TruthConfig::default()).unwrap();
        let stack = stack_for(&scene, &truth);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.grid");
        let p2 = dir.path().join("b.grid");
        stack.write(&p1).unwrap();
        let back = FeatureStack::read(&p1).unwrap();
        back.write(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(back.norm_params, stack.norm_params);
        for (x, y) in stack.channels.data().iter().zip(back.channels.data()) {
            assert_eq!(*x as f32, *y as f32);
        }
    }

    #[test]
    fn location_examples() {
        let b = Bounds { x_min: 0.0, x_max: 2000.0, y_min: 0.0, y_max: 2000.0 };
        assert_eq!(normalize_location([0.0, 0.0], &b).unwrap(), [0.0, 0.0]);
        assert_eq!(normalize_location([2000.0, 2000.0], &b).unwrap(), [1.0, 1.0]);
        assert_eq!(normalize_location([500.0, 1500.0], &b).unwrap(), [0.25, 0.75]);
        assert!(normalize_location([-1.0, 0.0], &b).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_affine(x0 in -100.0f64..100.0, w in 1.0f64..500.0, a in 0.0f64..1.0, c in 0.0f64..1.0) {
            let b = Bounds { x_min: x0, x_max: x0 + w, y_min: -x0, y_max: -x0 + 2.0 * w };
            let p = denormalize_location([a, c], &b);
            let q = denormalize_location([c, a], &b);
            let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            let u = normalize_location(mid, &b).unwrap();
            prop_assert!((u[0] - (a + c) / 2.0).abs() < 1e-9);
            prop_assert!((u[1] - (a + c) / 2.0).abs() < 1e-9);
        }
    }
}
