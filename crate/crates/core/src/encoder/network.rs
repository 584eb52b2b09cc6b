use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamStore, Tensor};

use super::conv::{Conv2d, PaddingMode};
use super::layers::{crop, crop_backward, dims, max_pool2, max_pool2_backward, relu, relu_backward};
use super::residual::{ResidualBlock, ResidualCache};

/// One downsampling stage: `conv -> relu -> crop -> residual block -> 2x2 max pool`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub conv_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub crop: usize,
    pub residual_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub stages: Vec<StageSpec>,
    pub padding_mode: PaddingMode,
}

impl EncoderConfig {
    fn table(in_channels: usize, out_channels: usize) -> Self {
        let stage =
            |conv_channels, kernel, padding, crop, residual_channels| StageSpec { conv_channels, kernel, padding, crop, residual_channels };
        Self {
            in_channels,
            stages: vec![stage(16, 5, 2, 0, 32), stage(64, 3, 2, 1, 128), stage(out_channels, 3, 1, 0, out_channels)],
            padding_mode: PaddingMode::Zeros,
        }
    }

    /// Encoder feeding the KAN head: 64 output channels.
    pub fn ckan(in_channels: usize) -> Self {
        Self::table(in_channels, 64)
    }

    /// Encoder feeding the MLP head: 128 output channels.
    pub fn cmlp(in_channels: usize) -> Self {
        Self::table(in_channels, 128)
    }

    pub fn out_channels(&self) -> usize {
        self.stages.last().map_or(self.in_channels, |s| s.residual_channels)
    }

    pub fn downsampling(&self) -> usize {
        1 << self.stages.len()
    }
}

#[derive(Debug, Clone)]
struct Stage {
    spec: StageSpec,
    conv: Conv2d,
    residual: ResidualBlock,
}

/// Cached activations from one forward pass.
#[derive(Debug, Clone)]
pub struct EncoderTape {
    stages: Vec<StageTape>,
    output_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
struct StageTape {
    input: Tensor,
    conv_out: Tensor,
    cropped: Tensor,
    residual: ResidualCache,
    residual_out_shape: Vec<usize>,
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    stages: Vec<Stage>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        let mut channels = config.in_channels;
        let mut stages = Vec::with_capacity(config.stages.len());
        for (i, spec) in config.stages.iter().enumerate() {
            let name = format!("encoder.stage{i}");
            let conv = Conv2d::new(
                store,
                &format!("{name}.conv"),
                channels,
                spec.conv_channels,
                spec.kernel,
                spec.padding,
                config.padding_mode,
                rng,
            )?;
            let residual =
                ResidualBlock::new(store, &format!("{name}.res"), spec.conv_channels, spec.residual_channels, config.padding_mode, rng)?;
            channels = spec.residual_channels;
            stages.push(Stage { spec: *spec, conv, residual });
        }
        Ok(Self { config, stages })
    }

    /// Output shape for a `[C, H, W]` input, after validating divisibility.
    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let f = self.config.downsampling();
        match input_shape {
            [c, h, w] if *c == self.config.in_channels => {
                if h % f != 0 || w % f != 0 || *h == 0 || *w == 0 {
                    return Err(Error::InvalidInput(format!("input {h}x{w} is not divisible by the encoder downsampling factor {f}")));
                }
                Ok(vec![self.config.out_channels(), h / f, w / f])
            }
            other => Err(Error::ShapeMismatch { expected: vec![self.config.in_channels, 0, 0], got: other.to_vec() }),
        }
    }

    pub fn forward(&self, store: &ParamStore, input: &Tensor) -> Result<(Tensor, EncoderTape)> {
        let output_shape = self.output_shape(input.shape())?;
        let mut x = input.clone();
        let mut tapes = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let conv_out = stage.conv.forward(store, &x)?;
            let activated = relu(&conv_out);
            let cropped = if stage.spec.crop > 0 { crop(&activated, stage.spec.crop)? } else { activated };
            let (res_out, residual) = stage.residual.forward(store, &cropped)?;
            let (pooled, argmax) = max_pool2(&res_out)?;
            tapes.push(StageTape {
                input: std::mem::replace(&mut x, pooled),
                conv_out,
                cropped,
                residual,
                residual_out_shape: res_out.shape().to_vec(),
                argmax,
            });
        }
        if x.shape() != output_shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: output_shape, got: x.shape().to_vec() });
        }
        Ok((x, EncoderTape { stages: tapes, output_shape }))
    }

    /// Accumulate parameter gradients for `upstream = d loss / d output`; returns `d loss / d input`.
    pub fn backward(&self, store: &ParamStore, tape: &EncoderTape, upstream: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        upstream.expect_shape(&tape.output_shape)?;
        let mut d = upstream.clone();
        for (stage, t) in self.stages.iter().zip(&tape.stages).rev() {
            let d_res = max_pool2_backward(&t.residual_out_shape, &t.argmax, &d)?;
            let d_cropped = stage.residual.backward(store, &t.cropped, &t.residual, &d_res, grads)?;
            let d_act = if stage.spec.crop > 0 { crop_backward(t.conv_out.shape(), stage.spec.crop, &d_cropped) } else { d_cropped };
            let d_conv = relu_backward(&t.conv_out, &d_act);
            d = stage.conv.backward(store, &t.input, &d_conv, grads)?;
        }
        dims(&d)?;
        Ok(d)
    }

    pub fn parameter_count(&self, store: &ParamStore) -> usize {
        let mut ids = Vec::new();
        for s in &self.stages {
            ids.extend([s.conv.weight, s.conv.bias]);
            for c in [Some(&s.residual.conv_a), Some(&s.residual.conv_b), s.residual.projection.as_ref()].into_iter().flatten() {
                ids.extend([c.weight, c.bias]);
            }
        }
        ids.into_iter().map(|id| store.get(id).len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    fn build(config: EncoderConfig, seed: u64) -> (Encoder, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Encoder::new(config, &mut store, &mut rng).unwrap();
        (enc, store)
    }

    #[test]
    fn table_shapes() {
        let (enc, _) = build(EncoderConfig::ckan(5), 0);
        assert_eq!(enc.output_shape(&[5, 256, 256]).unwrap(), vec![64, 32, 32]);
        let (enc, _) = build(EncoderConfig::cmlp(5), 0);
        assert_eq!(enc.output_shape(&[5, 64, 64]).unwrap(), vec![128, 8, 8]);
        assert!(enc.output_shape(&[5, 60, 64]).is_err());
    }

    #[test]
    fn forward_shape_on_small_input() {
        let (enc, store) = build(EncoderConfig::ckan(5), 1);
        let (y, _) = enc.forward(&store, &random_input(&[5, 16, 16], 2)).unwrap();
        assert_eq!(y.shape(), &[64, 2, 2]);
        assert!(y.is_finite());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let (enc, store) = build(EncoderConfig::ckan(5), 3);
        let (y, _) = enc.forward(&store, &Tensor::zeros(&[5, 16, 16])).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (enc, store) = build(EncoderConfig::ckan(5), 4);
        let (y, tape) = enc.forward(&store, &random_input(&[5, 16, 16], 5)).unwrap();
        let mut grads = store.zero_grads();
        let dx = enc.backward(&store, &tape, &Tensor::zeros(y.shape()), &mut grads).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(dx.max_abs(), 0.0);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let (enc, store) = build(EncoderConfig::ckan(5), 6);
        let x = random_input(&[5, 16, 16], 7);
        let (y, tape) = enc.forward(&store, &x).unwrap();
        let readout = random_input(y.shape(), 8);
        let objective = |s: &ParamStore| -> f64 {
            let (y, _) = enc.forward(s, &x).unwrap();
            y.data().iter().zip(readout.data()).map(|(a, b)| a * b).sum()
        };
        let mut grads = store.zero_grads();
        enc.backward(&store, &tape, &readout, &mut grads).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for id in store.ids().collect::<Vec<_>>() {
            for _ in 0..4 {
                let i = rng.gen_range(0..store.get(id).len());
                let mut plus = store.clone();
                plus.get_mut(id).data_mut()[i] += eps;
                let mut minus = store.clone();
                minus.get_mut(id).data_mut()[i] -= eps;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let an = grads.get(id).data()[i];
                worst = worst.max((an - fd).abs() / fd.abs().max(1.0));
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn circular_stages_are_translation_covariant() {
        let config = EncoderConfig {
            in_channels: 2,
            stages: vec![StageSpec { conv_channels: 3, kernel: 3, padding: 1, crop: 0, residual_channels: 4 }],
            padding_mode: PaddingMode::Circular,
        };
        let (enc, store) = build(config, 10);
        let stage = &enc.stages[0];
        let x = random_input(&[2, 8, 8], 11);
        let roll = |t: &Tensor| {
            let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
            let mut out = Tensor::zeros(&[c, h, w]);
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        out.channel_mut(ch)[((i + 3) % h) * w + (j + 5) % w] = t.channel(ch)[i * w + j];
                    }
                }
            }
            out
        };
        let run = |t: &Tensor| {
            let a = relu(&stage.conv.forward(&store, t).unwrap());
            stage.residual.forward(&store, &a).unwrap().0
        };
        let lhs = roll(&run(&x));
        let rhs = run(&roll(&x));
        for (u, v) in lhs.data().iter().zip(rhs.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
