use crate::error::{Error, Result};
use crate::gridworld::Bounds;
use crate::ratemodel::StatisticalChannel;
use crate::regressor::CkmModel;

/// A channel the planner can query: linear power gain and its gradient in meters.
pub trait ChannelModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn gain(&self, q: [f64; 2]) -> Result<f64> {
        Ok(self.gain_with_gradient(q)?.0)
    }

    fn gain_with_gradient(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])>;
}

/// Channel read from a trained CKM; queries are clipped onto the map.
pub struct CkmChannel<'a> {
    pub model: &'a CkmModel,
}

impl<'a> CkmChannel<'a> {
    pub fn new(model: &'a CkmModel) -> Result<Self> {
        if model.is_conditioned() && model.encoded().is_none() {
            return Err(Error::MissingCache("encoded feature map"));
        }
        Ok(Self { model })
    }

    fn bounds(&self) -> &Bounds {
        &self.model.meta().bounds
    }
}

impl ChannelModel for CkmChannel<'_> {
    fn name(&self) -> &'static str {
        "ckm"
    }

    fn gain_with_gradient(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        self.model.linear_gain_with_gradient(self.bounds().clip(q))
    }
}

impl ChannelModel for StatisticalChannel {
    fn name(&self) -> &'static str {
        "sc"
    }

    fn gain(&self, q: [f64; 2]) -> Result<f64> {
        Ok(StatisticalChannel::gain(self, q))
    }

    fn gain_with_gradient(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        Ok(StatisticalChannel::gain_with_gradient(self, q))
    }
}

pub const CHANNEL_NAMES: [&str; 2] = ["ckm", "sc"];

/// Everything a named channel may be built from.
pub struct ChannelSources<'a> {
    pub model: Option<&'a CkmModel>,
    pub statistical: Option<StatisticalChannel>,
}

/// Build the planner channel registered under `name`.
pub fn channel_by_name<'a>(name: &str, sources: &ChannelSources<'a>) -> Result<Box<dyn ChannelModel + 'a>> {
    match name {
        "ckm" => {
            let model = sources.model.ok_or_else(|| Error::InvalidInput("the ckm planner needs a trained model".into()))?;
            Ok(Box::new(CkmChannel::new(model)?))
        }
        "sc" => {
            let sc =
                sources.statistical.ok_or_else(|| Error::InvalidInput("the sc planner needs a calibrated statistical channel".into()))?;
            Ok(Box::new(sc))
        }
        other => Err(Error::UnknownName { kind: "planner", name: other.to_string(), available: CHANNEL_NAMES.join(", ") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_dispatches_by_name() {
        let sc = StatisticalChannel { bs_xy: [0.0, 0.0], height_gap_m: 75.0, beta0: 1e-4, min_distance_m: 1.0 };
        let sources = ChannelSources { model: None, statistical: Some(sc) };
        let ch = channel_by_name("sc", &sources).unwrap();
        assert_eq!(ch.name(), "sc");
        assert!((ch.gain([0.0, 0.0]).unwrap() - 1e-4 / 75f64.powi(2)).abs() < 1e-18);
        assert!(channel_by_name("ckm", &sources).is_err());
        assert!(matches!(channel_by_name("gwo", &sources), Err(Error::UnknownName { .. })));
    }
}
