use crate::error::{Error, Result};
use crate::grid::Grid;

use super::measurements::MeasurementSet;

/// Mean dB gain of the `k` nearest samples at every cell.
///
/// Distance is Euclidean in cell units; ties go to the sample with the
/// smaller `(row, col)`.
pub fn knn_interpolate(ms: &MeasurementSet, k: usize, shape: (usize, usize)) -> Result<Grid<f64>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if ms.len() < k {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {} available samples", ms.len())));
    }
    let (rows, cols) = shape;
    let mut samples: Vec<(i64, i64, f64)> = ms.entries.iter().map(|e| (e.row as i64, e.col as i64, e.gain_db())).collect();
    samples.sort_by_key(|a| (a.0, a.1));

    let mut out = Grid::filled(rows, cols, 0.0f64);
    let mut keyed: Vec<(i64, usize)> = Vec::with_capacity(samples.len());
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            keyed.clear();
            keyed.extend(samples.iter().enumerate().map(|(i, s)| {
                let (dr, dc) = (s.0 - r, s.1 - c);
                (dr * dr + dc * dc, i)
            }));
            // Sample index order equals (row, col) order, so the key breaks ties as required.
            keyed.select_nth_unstable(k - 1);
            let sum: f64 = keyed[..k].iter().map(|(_, i)| samples[*i].2).sum();
            *out.get_mut(r as usize, c as usize) = sum / k as f64;
        }
    }
    Ok(out)
}
