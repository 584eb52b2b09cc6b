use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, Gradients, ParamId, ParamStore, Tensor, Transpose};

use super::head::{HeadConfig, Regressor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Layer widths including input and output, e.g. `[130, 128, 32, 1]`.
    pub widths: Vec<usize>,
}

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Debug, Clone)]
pub struct MlpHead {
    config: MlpConfig,
    layers: Vec<(ParamId, ParamId)>,
}

impl MlpHead {
    pub fn new(config: MlpConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        if config.widths.len() < 2 || config.widths.contains(&0) {
            return Err(Error::InvalidInput(format!("bad MLP widths {:?}", config.widths)));
        }
        let mut layers = Vec::new();
        for (l, w) in config.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let weight: Vec<f64> = (0..n_in * n_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let bias: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let wid = store.add(format!("{prefix}.fc{l}.weight"), Tensor::from_vec(&[n_out, n_in], weight)?)?;
            let bid = store.add(format!("{prefix}.fc{l}.bias"), Tensor::from_vec(&[n_out], bias)?)?;
            layers.push((wid, bid));
        }
        Ok(Self { config, layers })
    }

    /// Pre-activations of every layer for a batch.
    fn activations(&self, store: &ParamStore, inputs: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let mut acts = vec![inputs.to_vec()];
        for (l, (wid, bid)) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.config.widths[l], self.config.widths[l + 1]);
            let prev = acts.last().expect("input layer");
            let x: Vec<f64> = if l == 0 { prev.clone() } else { prev.iter().map(|v| v.max(0.0)).collect() };
            let mut z = vec![0.0; batch * n_out];
            let b = store.get(*bid).data();
            for row in z.chunks_mut(n_out) {
                row.copy_from_slice(b);
            }
            gemm(batch, n_in, n_out, 1.0, &x, Transpose::No, store.get(*wid).data(), Transpose::Yes, 1.0, &mut z);
            acts.push(z);
        }
        acts
    }
}

impl Regressor for MlpHead {
    fn input_dim(&self) -> usize {
        self.config.widths[0]
    }

    fn parameter_count(&self, store: &ParamStore) -> usize {
        self.layers.iter().map(|(w, b)| store.get(*w).len() + store.get(*b).len()).sum()
    }

    fn forward(&self, store: &ParamStore, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        check_batch(inputs, batch, self.input_dim())?;
        Ok(self.activations(store, inputs, batch).pop().expect("output layer"))
    }

    fn backward(
        &self,
        store: &ParamStore,
        inputs: &[f64],
        batch: usize,
        upstream: &[f64],
        mut grads: Option<&mut Gradients>,
    ) -> Result<Vec<f64>> {
        check_batch(inputs, batch, self.input_dim())?;
        if upstream.len() != batch {
            return Err(Error::ShapeMismatch { expected: vec![batch], got: vec![upstream.len()] });
        }
        let acts = self.activations(store, inputs, batch);
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let (wid, bid) = self.layers[l];
            let (n_in, n_out) = (self.config.widths[l], self.config.widths[l + 1]);
            let x: Vec<f64> = if l == 0 { acts[0].clone() } else { acts[l].iter().map(|v| v.max(0.0)).collect() };
            if let Some(g) = grads.as_deref_mut() {
                gemm(n_out, batch, n_in, 1.0, &delta, Transpose::Yes, &x, Transpose::No, 1.0, g.get_mut(wid).data_mut());
                let db = g.get_mut(bid).data_mut();
                for row in delta.chunks(n_out) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
            let mut dx = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, 1.0, &delta, Transpose::No, store.get(wid).data(), Transpose::No, 0.0, &mut dx);
            if l > 0 {
                for (d, z) in dx.iter_mut().zip(&acts[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    fn piece_signature(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<i64>> {
        check_batch(input, 1, self.input_dim())?;
        let acts = self.activations(store, input, 1);
        Ok(acts[1..acts.len() - 1].iter().flatten().map(|z| (*z > 0.0) as i64).collect())
    }

    fn config(&self) -> HeadConfig {
        HeadConfig::Mlp(self.config.clone())
    }
}

pub(crate) fn check_batch(inputs: &[f64], batch: usize, dim: usize) -> Result<()> {
    if inputs.len() != batch * dim {
        return Err(Error::ShapeMismatch { expected: vec![batch, dim], got: vec![inputs.len()] });
    }
    Ok(())
}
