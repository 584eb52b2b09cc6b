use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, EncoderTape};
use crate::error::{Error, Result};
use crate::features::{normalize_location, FeatureStack, GainNormalization};
use crate::gridworld::Bounds;
use crate::numerics::{read_checkpoint, write_checkpoint, Checkpoint, Gradients, ParamStore, Tensor};

use super::head::{HeadConfig, Regressor};
use super::registry::{build_head, ModelKind};
use super::sampling::bilinear_sample_with_jacobian;

const HEAD_PREFIX: &str = "head";
const FEATURES_TENSOR: &str = "input_features";
const ENCODED_TENSOR: &str = "encoded_features";

/// Everything needed to rebuild a model apart from its tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub encoder: Option<EncoderConfig>,
    pub head: HeadConfig,
    /// Maps between normalized predictions and dB gains.
    pub target: GainNormalization,
    pub bounds: Bounds,
    pub seed: u64,
}

/// Encoder + head + cached encoder output: the differentiable map from a
/// location to a predicted gain.
#[derive(Debug)]
pub struct CkmModel {
    meta: ModelMeta,
    store: ParamStore,
    encoder: Option<Encoder>,
    head: Box<dyn Regressor>,
    features: Option<Tensor>,
    encoded: Option<Tensor>,
}

impl CkmModel {
    pub fn new(kind: &dyn ModelKind, stack: &FeatureStack, bounds: Bounds, target: GainNormalization, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let in_channels = stack.channels.shape()[0];
        let encoder = kind.encoder(in_channels).map(|cfg| Encoder::new(cfg, &mut store, &mut rng)).transpose()?;
        let features = match &encoder {
            Some(enc) => {
                enc.output_shape(stack.channels.shape())?;
                Some(stack.channels.clone())
            }
            None => None,
        };
        let input_dim = 2 + encoder.as_ref().map_or(0, |e| e.config.out_channels());
        let head = build_head(kind.head(input_dim), &mut store, HEAD_PREFIX, &mut rng)?;
        let meta = ModelMeta {
            kind: kind.name().to_string(),
            encoder: encoder.as_ref().map(|e| e.config.clone()),
            head: head.config(),
            target,
            bounds,
            seed,
        };
        Ok(Self { meta, store, encoder, head, features, encoded: None })
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn kind(&self) -> &str {
        &self.meta.kind
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        self.encoded = None;
        &mut self.store
    }

    pub fn head(&self) -> &dyn Regressor {
        self.head.as_ref()
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn is_conditioned(&self) -> bool {
        self.encoder.is_some()
    }

    pub fn head_parameter_count(&self) -> usize {
        self.head.parameter_count(&self.store)
    }

    pub fn encoder_parameter_count(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.parameter_count(&self.store))
    }

    /// Run the encoder once and cache its output for location queries.
    pub fn encode(&mut self) -> Result<()> {
        if let (Some(enc), Some(x)) = (&self.encoder, &self.features) {
            let (out, _) = enc.forward(&self.store, x)?;
            self.encoded = Some(out);
        }
        Ok(())
    }

    pub fn encoded(&self) -> Option<&Tensor> {
        self.encoded.as_ref()
    }

    fn cached_map(&self) -> Result<Option<&Tensor>> {
        match (&self.encoder, &self.encoded) {
            (None, _) => Ok(None),
            (Some(_), Some(map)) => Ok(Some(map)),
            (Some(_), None) => Err(Error::MissingCache("encoder output; call encode() first")),
        }
    }

    fn head_input(q: [f64; 2], map: Option<&Tensor>) -> (Vec<f64>, Option<super::SampleJacobian>) {
        let mut row = vec![q[0], q[1]];
        match map {
            Some(m) => {
                let jac = bilinear_sample_with_jacobian(m, q);
                row.extend_from_slice(&jac.values);
                (row, Some(jac))
            }
            None => (row, None),
        }
    }

    /// Predicted normalized gain at the unit location `q`.
    pub fn predict(&self, q: [f64; 2]) -> Result<f64> {
        let (row, _) = Self::head_input(q, self.cached_map()?);
        Ok(self.head.forward(&self.store, &row, 1)?[0])
    }

    /// Predicted normalized gain and its gradient with respect to the unit location.
    pub fn gain_gradient(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let (row, jac) = Self::head_input(q, self.cached_map()?);
        let (value, d_row) = self.head.value_and_input_gradient(&self.store, &row)?;
        let mut grad = [d_row[0], d_row[1]];
        if let Some(j) = jac {
            for (d, &g) in d_row[2..].iter().enumerate() {
                grad[0] += g * j.d_dx[d];
                grad[1] += g * j.d_dy[d];
            }
        }
        Ok((value, grad))
    }

    /// Identifies the smooth piece containing `q`: the bilinear cell plus the
    /// head's own piece signature. The prediction is smooth in `q` wherever
    /// this key is locally constant.
    pub fn piece_signature(&self, q: [f64; 2]) -> Result<Vec<i64>> {
        let map = self.cached_map()?;
        let (row, _) = Self::head_input(q, map);
        let mut key = match map {
            Some(m) => {
                let cell = |u: f64, n: usize| ((u.clamp(0.0, 1.0) * (n - 1) as f64).floor() as i64).min(n as i64 - 2);
                vec![cell(q[0], m.shape()[1]), cell(q[1], m.shape()[2])]
            }
            None => Vec::new(),
        };
        key.extend(self.head.piece_signature(&self.store, &row)?);
        Ok(key)
    }

    /// True when `q` and its central-difference neighbours at distance `eps` share one smooth piece.
    pub fn is_smooth_stencil(&self, q: [f64; 2], eps: f64) -> Result<bool> {
        let center = self.piece_signature(q)?;
        for a in 0..2 {
            for s in [-eps, eps] {
                let mut p = q;
                p[a] += s;
                if self.piece_signature(p)? != center {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Predicted gain in dB at the physical location `q` (meters).
    pub fn predict_db(&self, q: [f64; 2]) -> Result<f64> {
        let u = normalize_location(q, &self.meta.bounds)?;
        Ok(self.meta.target.denormalize(self.predict(u)?))
    }

    /// Predicted linear gain and its gradient with respect to the physical location.
    pub fn linear_gain_with_gradient(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let u = normalize_location(q, &self.meta.bounds)?;
        let (value, g) = self.gain_gradient(u)?;
        let linear = self.meta.target.to_linear(value);
        let span = self.meta.bounds.span();
        let scale = linear * std::f64::consts::LN_10 / 10.0 * self.meta.target.span();
        Ok((linear, [scale * g[0] / span[0], scale * g[1] / span[1]]))
    }

    /// Mean squared error on a batch and its gradients for every parameter.
    ///
    /// The encoder runs once for the whole batch and the gradient flows back
    /// through bilinear sampling into it. When `calibrate` is set, the head
    /// widens its input ranges to this batch first.
    pub fn loss_and_gradients(&mut self, qs: &[[f64; 2]], targets: &[f64], calibrate: bool) -> Result<(f64, Gradients)> {
        if qs.len() != targets.len() || qs.is_empty() {
            return Err(Error::InvalidInput("batch locations and targets must match and be non-empty".into()));
        }
        let forward: Option<(Tensor, EncoderTape)> = match (&self.encoder, &self.features) {
            (Some(enc), Some(x)) => Some(enc.forward(&self.store, x)?),
            _ => None,
        };
        let map = forward.as_ref().map(|(m, _)| m);
        let dim = self.head.input_dim();
        let batch = qs.len();
        let mut inputs = Vec::with_capacity(batch * dim);
        let mut jacobians = Vec::with_capacity(batch);
        for q in qs {
            let (row, jac) = Self::head_input(*q, map);
            inputs.extend(row);
            jacobians.push(jac);
        }
        if calibrate {
            self.head.calibrate(&self.store, &inputs, batch)?;
            self.meta.head = self.head.config();
        }
        let preds = self.head.forward(&self.store, &inputs, batch)?;
        let n = batch as f64;
        let loss = preds.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let upstream: Vec<f64> = preds.iter().zip(targets).map(|(p, y)| 2.0 * (p - y) / n).collect();
        let mut grads = self.store.zero_grads();
        let d_inputs = self.head.backward(&self.store, &inputs, batch, &upstream, Some(&mut grads))?;
        if let (Some(enc), Some((m, tape))) = (&self.encoder, &forward) {
            let mut d_map = Tensor::zeros(m.shape());
            for (row, jac) in d_inputs.chunks(dim).zip(&jacobians) {
                if let Some(j) = jac {
                    j.scatter(&row[2..], &mut d_map);
                }
            }
            enc.backward(&self.store, tape, &d_map, &mut grads)?;
        }
        self.encoded = None;
        Ok((loss, grads))
    }

    /// Freeze any calibrated head ranges.
    pub fn freeze_head(&mut self) {
        self.head.freeze();
        self.meta.head = self.head.config();
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors: Vec<(String, Tensor)> = self.store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
        if let Some(f) = &self.features {
            tensors.push((FEATURES_TENSOR.into(), f.clone()));
        }
        if let Some(e) = &self.encoded {
            tensors.push((ENCODED_TENSOR.into(), e.clone()));
        }
        Ok(Checkpoint { tensors, meta: serde_json::to_value(&self.meta)? })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ckpt.meta.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let mut store = ParamStore::new();
        let encoder = meta.encoder.clone().map(|cfg| Encoder::new(cfg, &mut store, &mut rng)).transpose()?;
        let head = build_head(meta.head.clone(), &mut store, HEAD_PREFIX, &mut rng)?;
        let mut features = None;
        let mut encoded = None;
        let mut loaded = 0;
        for (name, tensor) in &ckpt.tensors {
            match name.as_str() {
                FEATURES_TENSOR => features = Some(tensor.clone()),
                ENCODED_TENSOR => encoded = Some(tensor.clone()),
                _ => {
                    let id = store.find(name).ok_or_else(|| Error::Format(format!("unexpected tensor '{name}' in checkpoint")))?;
                    store.get(id).expect_shape(tensor.shape())?;
                    *store.get_mut(id) = tensor.clone();
                    loaded += 1;
                }
            }
        }
        if loaded != store.len() {
            return Err(Error::Format(format!("checkpoint holds {loaded} of {} parameter tensors", store.len())));
        }
        if encoder.is_some() && features.is_none() {
            return Err(Error::Format("conditioned model checkpoint lacks input features".into()));
        }
        Ok(Self { meta, store, encoder, head, features, encoded })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_checkpoint(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::regressor::ModelRegistry;
    use rand::Rng;

    fn toy_stack(seed: u64) -> FeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..5 * 16 * 16).map(|_| rng.gen_range(0.0..1.0)).collect();
        FeatureStack { channels: Tensor::from_vec(&[5, 16, 16], data).unwrap(), norm_params: vec![(0.0, 1.0); 5], resolution_m: 10.0 }
    }

    fn bounds() -> Bounds {
        Bounds { x_min: 0.0, x_max: 160.0, y_min: 0.0, y_max: 160.0 }
    }

    fn target() -> GainNormalization {
        GainNormalization { db_min: -110.0, db_max: -60.0 }
    }

    fn model(kind: &str, seed: u64) -> CkmModel {
        let registry = ModelRegistry::default();
        let mut m = CkmModel::new(registry.get(kind).unwrap(), &toy_stack(seed), bounds(), target(), seed).unwrap();
        m.encode().unwrap();
        m
    }

    #[test]
    fn missing_cache_is_reported() {
        let registry = ModelRegistry::default();
        let m = CkmModel::new(registry.get("ckan").unwrap(), &toy_stack(0), bounds(), target(), 0).unwrap();
        assert!(matches!(m.predict([0.5, 0.5]), Err(Error::MissingCache(_))));
        let coord = CkmModel::new(registry.get("mlp").unwrap(), &toy_stack(0), bounds(), target(), 0).unwrap();
        assert!(coord.predict([0.5, 0.5]).is_ok());
    }

    #[test]
    fn location_gradient_matches_finite_differences() {
        for kind in ["ckan", "cmlp", "mlp", "kan"] {
            let m = model(kind, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut checked = 0;
            while checked < 20 {
                let q = [rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98)];
                if !m.is_smooth_stencil(q, 1e-6).unwrap() {
                    continue;
                }
                checked += 1;
                let err = grad_check(
                    |v| {
                        let (val, g) = m.gain_gradient([v[0], v[1]]).unwrap();
                        (val, g.to_vec())
                    },
                    &q,
                    1e-6,
                )
                .unwrap();
                assert!(err < 1e-4, "{kind}: {err} at {q:?}");
            }
        }
    }

    #[test]
    fn physical_gradient_chains_normalizations() {
        let m = model("ckan", 3);
        let q = [61.3, 97.2];
        let (g, grad) = m.linear_gain_with_gradient(q).unwrap();
        let h = 1e-4;
        let f = |x: [f64; 2]| m.linear_gain_with_gradient(x).unwrap().0;
        let fx = (f([q[0] + h, q[1]]) - f([q[0] - h, q[1]])) / (2.0 * h);
        let fy = (f([q[0], q[1] + h]) - f([q[0], q[1] - h])) / (2.0 * h);
        assert!((grad[0] - fx).abs() <= 1e-6 * fx.abs().max(g / 160.0));
        assert!((grad[1] - fy).abs() <= 1e-6 * fy.abs().max(g / 160.0));
    }

    #[test]
    fn training_gradient_matches_finite_differences() {
        let mut m = model("ckan", 4);
        let qs = [[0.2, 0.3], [0.7, 0.55], [0.45, 0.9]];
        let ys = [0.1, 0.6, 0.9];
        let (_, grads) = m.loss_and_gradients(&qs, &ys, false).unwrap();
        let ids: Vec<_> = m.store().ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for id in ids {
            let i = rng.gen_range(0..m.store().get(id).len());
            let orig = m.store().get(id).data()[i];
            m.store_mut().get_mut(id).data_mut()[i] = orig + eps;
            let lp = m.loss_and_gradients(&qs, &ys, false).unwrap().0;
            m.store_mut().get_mut(id).data_mut()[i] = orig - eps;
            let lm = m.loss_and_gradients(&qs, &ys, false).unwrap().0;
            m.store_mut().get_mut(id).data_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            worst = worst.max((grads.get(id).data()[i] - fd).abs() / fd.abs().max(1.0));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = model("cmlp", 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = CkmModel::load(&path).unwrap();
        for q in [[0.1, 0.2], [0.55, 0.77]] {
            assert_eq!(m.predict(q).unwrap(), back.predict(q).unwrap());
            assert_eq!(m.gain_gradient(q).unwrap(), back.gain_gradient(q).unwrap());
        }
        assert_eq!(m.meta(), back.meta());
    }

    #[test]
    fn constant_map_with_blind_head_has_zero_gradient() {
        let mut m = model("ckan", 7);
        let first = m.store().find("head.layer0.coefficients").unwrap();
        let n_out = 10;
        let nb = 11;
        {
            let c = m.store_mut().get_mut(first).data_mut();
            for i in 0..2 {
                for v in &mut c[i * n_out * nb..(i + 1) * n_out * nb] {
                    *v = 0.0;
                }
            }
        }
        m.encode().unwrap();
        let map = m.encoded.as_mut().unwrap();
        map.fill(0.25);
        let (_, g) = m.gain_gradient([0.4, 0.6]).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn output_is_independent_of_query_for_encoder() {
        let m = model("ckan", 8);
        let before = m.encoded().unwrap().clone();
        for q in [[0.1, 0.1], [0.9, 0.4]] {
            m.predict(q).unwrap();
        }
        assert_eq!(&before, m.encoded().unwrap());
    }
}
