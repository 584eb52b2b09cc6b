use rand::Rng;

use crate::error::Result;
use crate::numerics::{Gradients, ParamStore, Tensor};

use super::conv::{Conv2d, PaddingMode};
use super::layers::{relu, relu_backward};

/// `relu(conv_b(relu(conv_a(x))) + shortcut(x))` with a 1x1 projection
/// shortcut when the channel count changes.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
    pub projection: Option<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct ResidualCache {
    a_pre: Tensor,
    a: Tensor,
    sum: Tensor,
}

impl ResidualBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        mode: PaddingMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv_a = Conv2d::new(store, &format!("{name}.conv_a"), in_channels, out_channels, 3, 1, mode, rng)?;
        let conv_b = Conv2d::new(store, &format!("{name}.conv_b"), out_channels, out_channels, 3, 1, mode, rng)?;
        let projection = if in_channels != out_channels {
            Some(Conv2d::new(store, &format!("{name}.proj"), in_channels, out_channels, 1, 0, mode, rng)?)
        } else {
            None
        };
        Ok(Self { conv_a, conv_b, projection })
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, ResidualCache)> {
        let a_pre = self.conv_a.forward(store, x)?;
        let a = relu(&a_pre);
        let mut sum = self.conv_b.forward(store, &a)?;
        match &self.projection {
            Some(p) => sum.add_assign(&p.forward(store, x)?)?,
            None => sum.add_assign(x)?,
        }
        let out = relu(&sum);
        Ok((out, ResidualCache { a_pre, a, sum }))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        cache: &ResidualCache,
        upstream: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let d_sum = relu_backward(&cache.sum, upstream);
        let d_a = self.conv_b.backward(store, &cache.a, &d_sum, grads)?;
        let d_a_pre = relu_backward(&cache.a_pre, &d_a);
        let mut dx = self.conv_a.backward(store, x, &d_a_pre, grads)?;
        match &self.projection {
            Some(p) => dx.add_assign(&p.backward(store, x, &d_sum, grads)?)?,
            None => dx.add_assign(&d_sum)?,
        }
        Ok(dx)
    }
}
