use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamId, ParamStore, Tensor};

use super::bspline::{bspline_basis_with_derivative, clamped_uniform_knots};
use super::head::{HeadConfig, Regressor};
use super::mlp::check_batch;

/// Relative margin added on each side of a calibrated range when it is frozen.
const DOMAIN_MARGIN: f64 = 1.0;

/// Affine map of one input onto the knot domain `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    pub lo: f64,
    pub hi: f64,
}

impl InputDomain {
    fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    fn scale(&self) -> f64 {
        if self.hi > self.lo {
            1.0 / (self.hi - self.lo)
        } else {
            1.0
        }
    }

    /// Position in the knot domain and `du/dv` (zero when clamped).
    fn map(&self, v: f64) -> (f64, f64) {
        let s = self.scale();
        let u = (v - self.lo) * s;
        if u < 0.0 {
            (0.0, 0.0)
        } else if u > 1.0 {
            (1.0, 0.0)
        } else {
            (u, s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanConfig {
    pub widths: Vec<usize>,
    pub grid: usize,
    pub order: usize,
    pub init_scale: f64,
    /// Per layer, per input; `None` until calibrated.
    #[serde(default)]
    pub domains: Option<Vec<Vec<InputDomain>>>,
    #[serde(default)]
    pub frozen: bool,
}

impl KanConfig {
    pub fn new(widths: Vec<usize>, grid: usize, order: usize) -> Self {
        Self { widths, grid, order, init_scale: 1.0, domains: None, frozen: false }
    }
}

/// Layer of learnable univariate splines, one per (input, output) edge, summed at outputs.
#[derive(Debug, Clone)]
pub struct BSplineLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub grid: usize,
    pub order: usize,
    pub knots: Vec<f64>,
    /// `[n_in, n_out, grid + order - 1]`.
    pub coefficients: ParamId,
    pub domains: Vec<InputDomain>,
}

struct LayerEval {
    basis: Vec<f64>,
    dbasis: Vec<f64>,
    du: Vec<f64>,
}

impl BSplineLayer {
    pub fn basis_count(&self) -> usize {
        self.grid + self.order - 1
    }

    fn eval_inputs(&self, x: &[f64]) -> LayerEval {
        let nb = self.basis_count();
        let mut basis = Vec::with_capacity(self.n_in * nb);
        let mut dbasis = Vec::with_capacity(self.n_in * nb);
        let mut du = Vec::with_capacity(self.n_in);
        for (i, v) in x.iter().enumerate() {
            let (u, s) = self.domains[i].map(*v);
            let (b, d) = bspline_basis_with_derivative(u, &self.knots, self.order);
            basis.extend(b);
            dbasis.extend(d);
            du.push(s);
        }
        LayerEval { basis, dbasis, du }
    }

    pub fn forward_row(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let ev = self.eval_inputs(x);
        self.combine(store, &ev)
    }

    fn combine(&self, store: &ParamStore, ev: &LayerEval) -> Vec<f64> {
        let nb = self.basis_count();
        let c = store.get(self.coefficients).data();
        let mut out = vec![0.0; self.n_out];
        for i in 0..self.n_in {
            let b = &ev.basis[i * nb..(i + 1) * nb];
            for (j, o) in out.iter_mut().enumerate() {
                let coef = &c[(i * self.n_out + j) * nb..(i * self.n_out + j + 1) * nb];
                *o += coef.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
            }
        }
        out
    }

    /// Returns `d/dx` for one row; accumulates coefficient gradients if requested.
    fn backward_row(&self, store: &ParamStore, ev: &LayerEval, upstream: &[f64], grads: Option<&mut Gradients>) -> Vec<f64> {
        let nb = self.basis_count();
        let c = store.get(self.coefficients).data();
        if let Some(g) = grads {
            let gc = g.get_mut(self.coefficients).data_mut();
            for i in 0..self.n_in {
                let b = &ev.basis[i * nb..(i + 1) * nb];
                for (j, up) in upstream.iter().enumerate() {
                    if *up == 0.0 {
                        continue;
                    }
                    let dst = &mut gc[(i * self.n_out + j) * nb..(i * self.n_out + j + 1) * nb];
                    for (d, q) in dst.iter_mut().zip(b) {
                        *d += up * q;
                    }
                }
            }
        }
        let mut dx = vec![0.0; self.n_in];
        for (i, d) in dx.iter_mut().enumerate() {
            if ev.du[i] == 0.0 {
                continue;
            }
            let db = &ev.dbasis[i * nb..(i + 1) * nb];
            let mut acc = 0.0;
            for (j, up) in upstream.iter().enumerate() {
                let coef = &c[(i * self.n_out + j) * nb..(i * self.n_out + j + 1) * nb];
                acc += up * coef.iter().zip(db).map(|(p, q)| p * q).sum::<f64>();
            }
            *d = acc * ev.du[i];
        }
        dx
    }
}

/// Stack of B-spline layers; the output of the last layer is the prediction.
#[derive(Debug, Clone)]
pub struct KanHead {
    config: KanConfig,
    layers: Vec<BSplineLayer>,
    observed: Vec<Vec<(f64, f64)>>,
}

fn coefficient_name(prefix: &str, l: usize) -> String {
    format!("{prefix}.layer{l}.coefficients")
}

impl KanHead {
    pub fn new(config: KanConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<Self> {
        Self::validate(&config)?;
        let nb = config.grid + config.order - 1;
        for (l, w) in config.widths.windows(2).enumerate() {
            let bound = config.init_scale / (w[0] as f64).sqrt();
            let c: Vec<f64> = (0..w[0] * w[1] * nb).map(|_| rng.gen_range(-bound..bound)).collect();
            store.add(coefficient_name(prefix, l), Tensor::from_vec(&[w[0], w[1], nb], c)?)?;
        }
        Self::attach(config, store, prefix)
    }

    pub fn attach(config: KanConfig, store: &ParamStore, prefix: &str) -> Result<Self> {
        Self::validate(&config)?;
        let nb = config.grid + config.order - 1;
        let knots = clamped_uniform_knots(config.grid, config.order);
        let mut layers = Vec::new();
        for (l, w) in config.widths.windows(2).enumerate() {
            let name = coefficient_name(prefix, l);
            let id = store.find(&name).ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))?;
            store.get(id).expect_shape(&[w[0], w[1], nb])?;
            let domains = match &config.domains {
                Some(d) if d.len() == config.widths.len() - 1 && d[l].len() == w[0] => d[l].clone(),
                Some(_) => return Err(Error::Format("KAN domain table does not match widths".into())),
                None => vec![InputDomain::unit(); w[0]],
            };
            layers.push(BSplineLayer {
                n_in: w[0],
                n_out: w[1],
                grid: config.grid,
                order: config.order,
                knots: knots.clone(),
                coefficients: id,
                domains,
            });
        }
        let observed = layers.iter().map(|l| vec![(f64::INFINITY, f64::NEG_INFINITY); l.n_in]).collect();
        Ok(Self { config, layers, observed })
    }

    fn validate(config: &KanConfig) -> Result<()> {
        if config.widths.len() < 2 || config.widths.contains(&0) || config.grid == 0 || config.order == 0 {
            return Err(Error::InvalidInput(format!(
                "bad KAN config widths {:?}, grid {}, order {}",
                config.widths, config.grid, config.order
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[BSplineLayer] {
        &self.layers
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_in * l.n_out).sum()
    }

    fn forward_one(&self, store: &ParamStore, x: &[f64]) -> (f64, Vec<LayerEval>) {
        let mut evals = Vec::with_capacity(self.layers.len());
        let mut v = x.to_vec();
        for layer in &self.layers {
            let ev = layer.eval_inputs(&v);
            v = layer.combine(store, &ev);
            evals.push(ev);
        }
        (v[0], evals)
    }
}

impl Regressor for KanHead {
    fn input_dim(&self) -> usize {
        self.config.widths[0]
    }

    fn parameter_count(&self, store: &ParamStore) -> usize {
        self.layers.iter().map(|l| store.get(l.coefficients).len()).sum()
    }

    fn forward(&self, store: &ParamStore, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let dim = self.input_dim();
        check_batch(inputs, batch, dim)?;
        if *self.config.widths.last().expect("widths") != 1 {
            return Err(Error::InvalidInput("KAN head must end in a single output".into()));
        }
        Ok(inputs.chunks(dim).map(|row| self.forward_one(store, row).0).collect())
    }

    fn backward(
        &self,
        store: &ParamStore,
        inputs: &[f64],
        batch: usize,
        upstream: &[f64],
        mut grads: Option<&mut Gradients>,
    ) -> Result<Vec<f64>> {
        let dim = self.input_dim();
        check_batch(inputs, batch, dim)?;
        let mut out = Vec::with_capacity(inputs.len());
        for (row, up) in inputs.chunks(dim).zip(upstream) {
            let (_, evals) = self.forward_one(store, row);
            let mut delta = vec![*up];
            for (layer, ev) in self.layers.iter().zip(&evals).rev() {
                delta = layer.backward_row(store, ev, &delta, grads.as_deref_mut());
            }
            out.extend(delta);
        }
        Ok(out)
    }

    fn piece_signature(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<i64>> {
        check_batch(input, 1, self.input_dim())?;
        let mut key = Vec::new();
        let mut v = input.to_vec();
        for layer in &self.layers {
            for (i, x) in v.iter().enumerate() {
                let d = layer.domains[i];
                key.push(if *x < d.lo {
                    -1
                } else if *x > d.hi {
                    1
                } else {
                    0
                });
            }
            v = layer.forward_row(store, &v);
        }
        Ok(key)
    }

    fn calibrate(&mut self, store: &ParamStore, inputs: &[f64], batch: usize) -> Result<()> {
        if self.config.frozen {
            return Ok(());
        }
        let dim = self.input_dim();
        check_batch(inputs, batch, dim)?;
        let mut current: Vec<Vec<f64>> = inputs.chunks(dim).map(|r| r.to_vec()).collect();
        for l in 0..self.layers.len() {
            for row in &current {
                for (i, v) in row.iter().enumerate() {
                    let o = &mut self.observed[l][i];
                    *o = (o.0.min(*v), o.1.max(*v));
                }
            }
            for (i, d) in self.layers[l].domains.iter_mut().enumerate() {
                let (lo, hi) = self.observed[l][i];
                *d = if hi > lo { InputDomain { lo, hi } } else { InputDomain { lo: lo - 0.5, hi: lo + 0.5 } };
            }
            let layer = &self.layers[l];
            current = current.iter().map(|row| layer.forward_row(store, row)).collect();
        }
        self.config.domains = Some(self.layers.iter().map(|l| l.domains.clone()).collect());
        Ok(())
    }

    fn freeze(&mut self) {
        if self.config.frozen {
            return;
        }
        for layer in &mut self.layers {
            for d in &mut layer.domains {
                let pad = DOMAIN_MARGIN * (d.hi - d.lo);
                *d = InputDomain { lo: d.lo - pad, hi: d.hi + pad };
            }
        }
        self.config.domains = Some(self.layers.iter().map(|l| l.domains.clone()).collect());
        self.config.frozen = true;
    }

    fn config(&self) -> HeadConfig {
        HeadConfig::Kan(self.config.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::regressor::bspline::{bspline_basis, bspline_basis_derivative};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn head(widths: Vec<usize>, g: usize, seed: u64) -> (KanHead, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = KanHead::new(KanConfig::new(widths, g, 4), &mut store, "kan", &mut rng).unwrap();
        (h, store)
    }

    #[test]
    fn table_parameter_count() {
        let (h, store) = head(vec![66, 10, 1], 8, 0);
        assert_eq!(h.edge_count(), 670);
        assert_eq!(h.parameter_count(&store), 7370);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (h, store) = head(vec![3, 4, 2, 1], 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..0.95)).collect();
            let err = grad_check(
                |v| {
                    let (val, g) = h.value_and_input_gradient(&store, v).unwrap();
                    (val, g)
                },
                &x,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-6, "{err}");
        }

        let x = [0.2, 0.5, 0.7];
        let id = h.layers[0].coefficients;
        let base = store.get(id).data().to_vec();
        let err = grad_check(
            |theta| {
                let mut s = store.clone();
                s.get_mut(id).data_mut().copy_from_slice(theta);
                let val = h.forward(&s, &x, 1).unwrap()[0];
                let mut g = s.zero_grads();
                h.backward(&s, &x, 1, &[1.0], Some(&mut g)).unwrap();
                (val, g.get(id).data().to_vec())
            },
            &base,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7);
    }

    #[test]
    fn single_hidden_unit_chain_by_hand() {
        let (mut h, store) = head(vec![2, 1, 1], 10, 3);
        h.layers[1].domains[0] = InputDomain { lo: -2.0, hi: 2.0 };
        let x = [0.31, 0.64];
        let t = clamped_uniform_knots(10, 4);
        let c0 = store.get(h.layers[0].coefficients).data();
        let c1 = store.get(h.layers[1].coefficients).data();
        let psi = |c: &[f64], v: f64| -> f64 { c.iter().zip(bspline_basis(v, &t, 4)).map(|(a, b)| a * b).sum() };
        let dpsi = |c: &[f64], v: f64| -> f64 { c.iter().zip(bspline_basis_derivative(v, &t, 4)).map(|(a, b)| a * b).sum() };
        let hidden = psi(&c0[..13], x[0]) + psi(&c0[13..], x[1]);
        let u = (hidden + 2.0) / 4.0;
        let outer = dpsi(c1, u) / 4.0;
        let expected = [outer * dpsi(&c0[..13], x[0]), outer * dpsi(&c0[13..], x[1])];
        let (value, grad) = h.value_and_input_gradient(&store, &x).unwrap();
        assert!((value - psi(c1, u)).abs() < 1e-12);
        assert!((grad[0] - expected[0]).abs() < 1e-12);
        assert!((grad[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn calibration_then_freeze_adds_margin() {
        let (mut h, store) = head(vec![2, 3, 1], 5, 4);
        let inputs = [2.0, -1.0, 4.0, 1.0, 3.0, 0.0];
        h.calibrate(&store, &inputs, 3).unwrap();
        assert_eq!(h.layers[0].domains[0], InputDomain { lo: 2.0, hi: 4.0 });
        h.freeze();
        let d = h.layers[0].domains[1];
        assert!((d.lo + 3.0).abs() < 1e-12 && (d.hi - 3.0).abs() < 1e-12);
        let before = h.layers[0].domains.clone();
        h.calibrate(&store, &[100.0, 100.0], 1).unwrap();
        assert_eq!(h.layers[0].domains, before);
    }

    #[test]
    fn clamped_inputs_have_zero_gradient() {
        let (h, store) = head(vec![1, 1], 5, 5);
        let (_, g) = h.value_and_input_gradient(&store, &[1.7]).unwrap();
        assert_eq!(g, vec![0.0]);
    }
}
