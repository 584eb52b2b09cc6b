//! Row-major 2-D grids and the `.grid` file format.
//!
//! A `.grid` file is raw little-endian `f32` values in row-major order
//! (channel-major first for 3-D stacks). Its sidecar `<file>.json` carries
//! `{rows, cols, resolution_m, quantity, units}` and, for stacks,
//! `channels` and `channel_names`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: vec![rows, cols], got: vec![data.len()] });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    /// Iterate `(row, col, value)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let cols = self.cols;
        self.data.iter().enumerate().map(move |(i, v)| (i / cols, i % cols, v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub rows: usize,
    pub cols: usize,
    pub resolution_m: f64,
    pub quantity: String,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
    /// Free-form extras such as the heatmap palette mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
}

impl GridSidecar {
    pub fn new(rows: usize, cols: usize, resolution_m: f64, quantity: &str, units: &str) -> Self {
        Self { rows, cols, resolution_m, quantity: quantity.into(), units: units.into(), channels: None, channel_names: None, notes: None }
    }

    fn value_count(&self) -> usize {
        self.channels.unwrap_or(1) * self.rows * self.cols
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Encode values as the raw `.grid` payload (f32 LE).
pub fn encode_grid_payload(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid_payload(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format("grid payload length is not a multiple of 4".into()));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64).collect())
}

pub fn write_grid_file(path: &Path, sidecar: &GridSidecar, values: &[f64]) -> Result<()> {
    if values.len() != sidecar.value_count() {
        return Err(Error::ShapeMismatch {
            expected: vec![sidecar.channels.unwrap_or(1), sidecar.rows, sidecar.cols],
            got: vec![values.len()],
        });
    }
    std::fs::write(path, encode_grid_payload(values))?;
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_grid_file(path: &Path) -> Result<(GridSidecar, Vec<f64>)> {
    let sidecar: GridSidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
    let values = decode_grid_payload(&std::fs::read(path)?)?;
    if values.len() != sidecar.value_count() {
        return Err(Error::Format(format!("{} holds {} values, sidecar says {}", path.display(), values.len(), sidecar.value_count())));
    }
    Ok((sidecar, values))
}
