use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{knn_interpolate, normalize_location, GainNormalization, MeasurementSet};
use crate::grid::Grid;
use crate::gridworld::{EnvironmentScene, GroundTruthCkm};
use crate::regressor::CkmModel;

/// `sum (pred - truth)^2 / sum truth^2` over `domain`.
pub fn evaluate_nmse(pred: &Grid<f64>, truth: &Grid<f64>, domain: &[(usize, usize)]) -> Result<f64> {
    if pred.shape() != truth.shape() {
        let (a, b) = (pred.shape(), truth.shape());
        return Err(Error::ShapeMismatch { expected: vec![b.0, b.1], got: vec![a.0, a.1] });
    }
    if domain.is_empty() {
        return Err(Error::InvalidInput("NMSE domain is empty".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(r, c) in domain {
        let (p, t) = (*pred.get(r, c), *truth.get(r, c));
        num += (p - t).powi(2);
        den += t * t;
    }
    if !(den > 0.0) {
        return Err(Error::Numeric("NMSE denominator is zero over the domain".into()));
    }
    Ok(num / den)
}

/// Ground truth mapped into the model's normalized dB target domain.
pub fn normalized_truth(truth: &GroundTruthCkm, norm: &GainNormalization) -> Grid<f64> {
    truth.gains_db.map(|db| norm.normalize(*db))
}

/// Normalized prediction at every cell center of `scene`.
pub fn rasterize_ckm(model: &CkmModel, scene: &EnvironmentScene) -> Result<Grid<f64>> {
    let (rows, cols) = (scene.rows(), scene.cols());
    let bounds = scene.bounds();
    let values = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let u = normalize_location(scene.cell_center(i / cols, i % cols), &bounds)?;
            model.predict(u)
        })
        .collect::<Result<Vec<f64>>>()?;
    Grid::from_vec(rows, cols, values)
}

/// KNN interpolation of the samples, in the same normalized dB domain as [`rasterize_ckm`].
pub fn knn_baseline(ms: &MeasurementSet, k: usize, norm: &GainNormalization) -> Result<Grid<f64>> {
    let db = knn_interpolate(ms, k, (ms.rows, ms.cols))?;
    Ok(db.map(|v| norm.normalize(*v)))
}
