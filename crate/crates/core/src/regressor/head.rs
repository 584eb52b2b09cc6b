use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{Gradients, ParamStore};

use super::kan::KanConfig;
use super::mlp::MlpConfig;

/// Serializable description of a head, including any calibrated state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HeadConfig {
    Mlp(MlpConfig),
    Kan(KanConfig),
}

/// A regression head mapping an input row to one scalar.
///
/// Inputs are row-major `[batch, input_dim]`.
pub trait Regressor: Debug + Send + Sync {
    fn input_dim(&self) -> usize;

    fn parameter_count(&self, store: &ParamStore) -> usize;

    fn forward(&self, store: &ParamStore, inputs: &[f64], batch: usize) -> Result<Vec<f64>>;

    /// Backpropagate `upstream = d loss / d output`. Parameter gradients are
    /// accumulated when `grads` is given; the input gradient is returned.
    fn backward(
        &self,
        store: &ParamStore,
        inputs: &[f64],
        batch: usize,
        upstream: &[f64],
        grads: Option<&mut Gradients>,
    ) -> Result<Vec<f64>>;

    /// Output and input gradient at a single row.
    fn value_and_input_gradient(&self, store: &ParamStore, input: &[f64]) -> Result<(f64, Vec<f64>)> {
        let value = self.forward(store, input, 1)?[0];
        let grad = self.backward(store, input, 1, &[1.0], None)?;
        Ok((value, grad))
    }

    /// Discrete key of the smooth piece containing this input: activation
    /// sign patterns, clamping states and the like. Empty for smooth heads.
    fn piece_signature(&self, _store: &ParamStore, _input: &[f64]) -> Result<Vec<i64>> {
        Ok(Vec::new())
    }

    /// Widen internal input ranges to cover this batch; no-op for heads without ranges.
    fn calibrate(&mut self, _store: &ParamStore, _inputs: &[f64], _batch: usize) -> Result<()> {
        Ok(())
    }

    /// Freeze calibrated ranges (with margin).
    fn freeze(&mut self) {}

    fn config(&self) -> HeadConfig;
}
