use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|| (rows_i . x + offset_i)_i ||_2 <= bound`, rows stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub offsets: Vec<f64>,
    pub bound: f64,
}

impl SocConstraint {
    /// `|| x[a] - x[b] || <= bound` for equally long index blocks.
    pub fn difference(a: &[usize], b: &[usize], bound: f64) -> Self {
        Self { rows: a.iter().zip(b).map(|(&i, &j)| vec![(i, 1.0), (j, -1.0)]).collect(), offsets: vec![0.0; a.len()], bound }
    }

    /// `|| x[a] - center || <= bound`.
    pub fn ball(a: &[usize], center: &[f64], bound: f64) -> Self {
        Self { rows: a.iter().map(|&i| vec![(i, 1.0)]).collect(), offsets: center.iter().map(|c| -c).collect(), bound }
    }

    pub(crate) fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(&self.offsets).map(|(row, off)| row.iter().map(|(i, a)| a * x[*i]).sum::<f64>() + off).collect()
    }

    pub fn norm_at(&self, x: &[f64]) -> f64 {
        self.residual(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Maximize `objective . x` subject to linear, box and second-order-cone constraints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConeProgram {
    pub n: usize,
    pub objective: Vec<f64>,
    /// `row . x = rhs`.
    pub equalities: Vec<(Vec<f64>, f64)>,
    /// `row . x <= rhs`.
    pub inequalities: Vec<(Vec<f64>, f64)>,
    pub cones: Vec<SocConstraint>,
    /// Per-variable `(lo, hi)`; infinite ends are ignored.
    pub bounds: Vec<(f64, f64)>,
}

impl ConeProgram {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            objective: vec![0.0; n],
            equalities: Vec::new(),
            inequalities: Vec::new(),
            cones: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn add_equality(&mut self, row: Vec<f64>, rhs: f64) {
        self.equalities.push((row, rhs));
    }

    pub fn add_inequality(&mut self, row: Vec<f64>, rhs: f64) {
        self.inequalities.push((row, rhs));
    }

    /// Inequality from sparse `(index, coefficient)` terms.
    pub fn add_sparse_inequality(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let mut row = vec![0.0; self.n];
        for &(i, a) in terms {
            row[i] += a;
        }
        self.inequalities.push((row, rhs));
    }

    pub fn add_sparse_equality(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let mut row = vec![0.0; self.n];
        for &(i, a) in terms {
            row[i] += a;
        }
        self.equalities.push((row, rhs));
    }

    pub fn add_cone(&mut self, cone: SocConstraint) {
        self.cones.push(cone);
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("cone program: {what}")));
        if self.objective.len() != self.n || self.bounds.len() != self.n {
            return bad("objective or bounds length differs from n");
        }
        if self.equalities.iter().chain(&self.inequalities).any(|(r, b)| r.len() != self.n || !b.is_finite()) {
            return bad("constraint row of wrong length or non-finite rhs");
        }
        for c in &self.cones {
            if c.rows.len() != c.offsets.len() || c.rows.iter().flatten().any(|(i, _)| *i >= self.n) {
                return bad("cone rows refer outside the variables");
            }
            if !(c.bound > 0.0) {
                return bad("cone bound must be positive");
            }
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return bad("every box must have lo < hi");
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, rhs) in &self.equalities {
            worst = worst.max((dot(row, x) - rhs).abs());
        }
        for (row, rhs) in &self.inequalities {
            worst = worst.max(dot(row, x) - rhs);
        }
        for c in &self.cones {
            worst = worst.max(c.norm_at(x) - c.bound);
        }
        for (v, (lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
