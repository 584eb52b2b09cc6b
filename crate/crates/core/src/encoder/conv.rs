use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, Gradients, ParamId, ParamStore, Tensor, Transpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PaddingMode {
    Zeros,
    /// Wrap-around padding; makes the convolution exactly translation covariant.
    Circular,
}

/// Stride-1 2-D cross-correlation over a `[C, H, W]` tensor.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub mode: PaddingMode,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2d {
    /// He-uniform kernel, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        mode: PaddingMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..out_channels * fan_in).map(|_| rng.gen_range(-bound..bound)).collect();
        let weight = store.add(format!("{name}.weight"), Tensor::from_vec(&[out_channels, in_channels, kernel, kernel], w)?)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self { in_channels, out_channels, kernel, padding, mode, weight, bias })
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < self.kernel || wp < self.kernel {
            return Err(Error::InvalidInput(format!("{h}x{w} input too small for a {k}x{k} kernel", k = self.kernel)));
        }
        Ok((hp - self.kernel + 1, wp - self.kernel + 1))
    }

    fn source_index(&self, i: isize, n: usize) -> Option<usize> {
        match self.mode {
            PaddingMode::Zeros => (i >= 0 && (i as usize) < n).then_some(i as usize),
            PaddingMode::Circular => Some(i.rem_euclid(n as isize) as usize),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_channels {
            return Err(Error::ShapeMismatch { expected: vec![self.in_channels, 0, 0], got: s.to_vec() });
        }
        Ok((s[1], s[2]))
    }

    /// Unfold input patches into a `[C*k*k, Ho*Wo]` matrix.
    fn im2col(&self, x: &Tensor, ho: usize, wo: usize) -> Vec<f64> {
        let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let k = self.kernel;
        let p = self.padding as isize;
        let plane = ho * wo;
        let mut cols = vec![0.0; c_in * k * k * plane];
        for c in 0..c_in {
            let src = x.channel(c);
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oi in 0..ho {
                        let Some(si) = self.source_index(oi as isize + ki as isize - p, h) else {
                            continue;
                        };
                        for oj in 0..wo {
                            if let Some(sj) = self.source_index(oj as isize + kj as isize - p, w) {
                                dst[oi * wo + oj] = src[si * w + sj];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], c_in: usize, h: usize, w: usize, ho: usize, wo: usize) -> Tensor {
        let k = self.kernel;
        let p = self.padding as isize;
        let plane = ho * wo;
        let mut dx = Tensor::zeros(&[c_in, h, w]);
        for c in 0..c_in {
            let dst = dx.channel_mut(c);
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oi in 0..ho {
                        let Some(si) = self.source_index(oi as isize + ki as isize - p, h) else {
                            continue;
                        };
                        for oj in 0..wo {
                            if let Some(sj) = self.source_index(oj as isize + kj as isize - p, w) {
                                dst[si * w + sj] += src[oi * wo + oj];
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let (ho, wo) = self.output_size(h, w)?;
        let cols = self.im2col(x, ho, wo);
        let plane = ho * wo;
        let patch = self.in_channels * self.kernel * self.kernel;
        let mut out = vec![0.0; self.out_channels * plane];
        let bias = store.get(self.bias).data();
        for (o, chunk) in out.chunks_mut(plane).enumerate() {
            chunk.fill(bias[o]);
        }
        gemm(self.out_channels, patch, plane, 1.0, store.get(self.weight).data(), Transpose::No, &cols, Transpose::No, 1.0, &mut out);
        Tensor::from_vec(&[self.out_channels, ho, wo], out)
    }

    /// Accumulate parameter gradients into `grads` and return the input gradient.
    pub fn backward(&self, store: &ParamStore, x: &Tensor, upstream: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let (ho, wo) = self.output_size(h, w)?;
        upstream.expect_shape(&[self.out_channels, ho, wo])?;
        let plane = ho * wo;
        let patch = self.in_channels * self.kernel * self.kernel;
        let cols = self.im2col(x, ho, wo);
        let up = upstream.data();

        gemm(self.out_channels, plane, patch, 1.0, up, Transpose::No, &cols, Transpose::Yes, 1.0, grads.get_mut(self.weight).data_mut());
        for (o, db) in grads.get_mut(self.bias).data_mut().iter_mut().enumerate() {
            *db += up[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }

        let mut dcols = vec![0.0; patch * plane];
        gemm(patch, self.out_channels, plane, 1.0, store.get(self.weight).data(), Transpose::Yes, up, Transpose::No, 0.0, &mut dcols);
        Ok(self.col2im(&dcols, self.in_channels, h, w, ho, wo))
    }
}
