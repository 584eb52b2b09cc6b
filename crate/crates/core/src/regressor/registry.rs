use rand::Rng;

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::ParamStore;

use super::head::{HeadConfig, Regressor};
use super::kan::{KanConfig, KanHead};
use super::mlp::{MlpConfig, MlpHead};

/// A named model family: which encoder (if any) and which head to build.
pub trait ModelKind: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    /// `None` for coordinate-only models.
    fn encoder(&self, in_channels: usize) -> Option<EncoderConfig>;

    fn head(&self, input_dim: usize) -> HeadConfig;
}

struct ConditionalKan;
struct ConditionalMlp;
struct CoordinateMlp;
struct CoordinateKan;

impl ModelKind for ConditionalKan {
    fn name(&self) -> &'static str {
        "ckan"
    }
    fn description(&self) -> &'static str {
        "CNN encoder (64 channels) + B-spline KAN head"
    }
    fn encoder(&self, in_channels: usize) -> Option<EncoderConfig> {
        Some(EncoderConfig::ckan(in_channels))
    }
    fn head(&self, input_dim: usize) -> HeadConfig {
        HeadConfig::Kan(KanConfig::new(vec![input_dim, 10, 1], 8, 4))
    }
}

impl ModelKind for ConditionalMlp {
    fn name(&self) -> &'static str {
        "cmlp"
    }
    fn description(&self) -> &'static str {
        "CNN encoder (128 channels) + MLP head"
    }
    fn encoder(&self, in_channels: usize) -> Option<EncoderConfig> {
        Some(EncoderConfig::cmlp(in_channels))
    }
    fn head(&self, input_dim: usize) -> HeadConfig {
        HeadConfig::Mlp(MlpConfig { widths: vec![input_dim, 128, 32, 1] })
    }
}

impl ModelKind for CoordinateMlp {
    fn name(&self) -> &'static str {
        "mlp"
    }
    fn description(&self) -> &'static str {
        "coordinate-only MLP"
    }
    fn encoder(&self, _in_channels: usize) -> Option<EncoderConfig> {
        None
    }
    fn head(&self, input_dim: usize) -> HeadConfig {
        HeadConfig::Mlp(MlpConfig { widths: vec![input_dim, 64, 128, 64, 32, 1] })
    }
}

impl ModelKind for CoordinateKan {
    fn name(&self) -> &'static str {
        "kan"
    }
    fn description(&self) -> &'static str {
        "coordinate-only B-spline KAN"
    }
    fn encoder(&self, _in_channels: usize) -> Option<EncoderConfig> {
        None
    }
    fn head(&self, input_dim: usize) -> HeadConfig {
        HeadConfig::Kan(KanConfig::new(vec![input_dim, 10, 20, 10, 1], 10, 4))
    }
}

/// Model kinds selectable by name at runtime.
pub struct ModelRegistry {
    kinds: Vec<Box<dyn ModelKind>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        let mut r = Self { kinds: Vec::new() };
        r.register(Box::new(ConditionalKan));
        r.register(Box::new(ConditionalMlp));
        r.register(Box::new(CoordinateMlp));
        r.register(Box::new(CoordinateKan));
        r
    }
}

impl ModelRegistry {
    /// Adds a kind, replacing any existing kind of the same name.
    pub fn register(&mut self, kind: Box<dyn ModelKind>) {
        self.kinds.retain(|k| k.name() != kind.name());
        self.kinds.push(kind);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ModelKind> {
        self.kinds.iter().find(|k| k.name() == name).map(|k| k.as_ref()).ok_or_else(|| Error::UnknownName {
            kind: "model kind",
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kinds.iter().map(|k| k.name()).collect()
    }
}

pub(crate) fn build_head(config: HeadConfig, store: &mut ParamStore, prefix: &str, rng: &mut impl Rng) -> Result<Box<dyn Regressor>> {
    Ok(match config {
        HeadConfig::Mlp(c) => Box::new(MlpHead::new(c, store, prefix, rng)?),
        HeadConfig::Kan(c) => Box::new(KanHead::new(c, store, prefix, rng)?),
    })
}
