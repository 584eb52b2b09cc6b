use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::GroundTruthCkm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub row: usize,
    pub col: usize,
    /// Linear power gain.
    pub gain: f64,
}

impl Measurement {
    pub fn gain_db(&self) -> f64 {
        10.0 * self.gain.log10()
    }
}

/// Sparse measurements of the channel map, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub entries: Vec<Measurement>,
    pub ratio: f64,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
}

/// Sample `round(ratio * cells)` distinct cells uniformly without replacement.
pub fn sample_measurements(ckm: &GroundTruthCkm, ratio: f64, seed: u64) -> Result<MeasurementSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("sampling ratio {ratio} outside (0, 1]")));
    }
    let (rows, cols) = ckm.gains.shape();
    let total = rows * cols;
    let count = (ratio * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::InvalidInput(format!("ratio {ratio} yields no samples on {rows}x{cols}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, total, count).into_vec();
    picked.sort_unstable();
    let entries = picked.into_iter().map(|i| Measurement { row: i / cols, col: i % cols, gain: ckm.gains.data()[i] }).collect();
    Ok(MeasurementSet { entries, ratio, seed, rows, cols })
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for e in &self.entries {
            mask[e.row * self.cols + e.col] = true;
        }
        mask
    }

    /// Cells not sampled, in row-major order: the evaluation split.
    pub fn complement(&self) -> Vec<(usize, usize)> {
        let mask = self.mask();
        (0..self.rows * self.cols).filter(|i| !mask[*i]).map(|i| (i / self.cols, i % self.cols)).collect()
    }

    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.row, e.col)).collect()
    }

    /// Multiplicative log-normal measurement noise with `sigma_db` standard deviation in dB.
    pub fn with_noise(mut self, sigma_db: f64, seed: u64) -> Result<Self> {
        if sigma_db == 0.0 {
            return Ok(self);
        }
        let normal = Normal::new(0.0, sigma_db).map_err(|e| Error::InvalidInput(format!("noise level {sigma_db}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in &mut self.entries {
            e.gain *= 10f64.powf(normal.sample(&mut rng) / 10.0);
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn ckm(rows: usize, cols: usize) -> GroundTruthCkm {
        let data = (0..rows * cols).map(|i| 1e-9 * (1.0 + i as f64)).collect();
        GroundTruthCkm::from_gains(Grid::from_vec(rows, cols, data).unwrap(), 2.4e9).unwrap()
    }

    #[test]
    fn full_ratio_takes_every_cell_once() {
        let ms = sample_measurements(&ckm(7, 5), 1.0, 3).unwrap();
        assert_eq!(ms.len(), 35);
        let mut cells = ms.cells();
        cells.dedup();
        assert_eq!(cells.len(), 35);
        assert!(ms.complement().is_empty());
    }

    #[test]
    fn three_percent_of_256_squared() {
        let ms = sample_measurements(&ckm(256, 256), 0.03, 11).unwrap();
        assert_eq!(ms.len(), 1966);
    }

    #[test]
    fn split_is_a_partition() {
        let ms = sample_measurements(&ckm(20, 20), 0.1, 5).unwrap();
        let train: std::collections::HashSet<_> = ms.cells().into_iter().collect();
        let eval: std::collections::HashSet<_> = ms.complement().into_iter().collect();
        assert!(train.is_disjoint(&eval));
        assert_eq!(train.len() + eval.len(), 400);
    }

    #[test]
    fn zero_sample_ratio_rejected() {
        assert!(sample_measurements(&ckm(4, 4), 0.01, 0).is_err());
        assert!(sample_measurements(&ckm(4, 4), 0.0, 0).is_err());
        assert!(sample_measurements(&ckm(4, 4), 1.5, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_measurements(&ckm(30, 30), 0.05, 9).unwrap();
        let b = sample_measurements(&ckm(30, 30), 0.05, 9).unwrap();
        let c = sample_measurements(&ckm(30, 30), 0.05, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.cells(), c.cells());
    }

    #[test]
    fn gains_are_read_from_truth() {
        let truth = ckm(6, 6);
        let ms = sample_measurements(&truth, 0.5, 1).unwrap();
        for e in &ms.entries {
            assert_eq!(e.gain, *truth.gains.get(e.row, e.col));
        }
    }

    #[test]
    fn noise_perturbs_only_gains() {
        let ms = sample_measurements(&ckm(10, 10), 0.2, 1).unwrap();
        let noisy = ms.clone().with_noise(2.0, 4).unwrap();
        assert_eq!(ms.cells(), noisy.cells());
        assert!(ms.entries.iter().zip(&noisy.entries).any(|(a, b)| a.gain != b.gain));
    }
}
