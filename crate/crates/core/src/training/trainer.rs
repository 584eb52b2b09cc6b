use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_location, FeatureStack, GainNormalization, MeasurementSet};
use crate::gridworld::{EnvironmentScene, GroundTruthCkm};
use crate::numerics::AdamConfig;
use crate::regressor::{CkmModel, ModelKind};

use super::evaluate::{evaluate_nmse, normalized_truth, rasterize_ckm};

/// Smallest first-epoch loss used as the divergence reference; targets live in `[0, 1]`.
const DIVERGENCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clamped to the number of samples.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Score the held-out cells every this many epochs (and after the last); 0 scores only the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 128, learning_rate: 1e-3, seed: 0, eval_every: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub eval_nmse: Option<f64>,
}

#[derive(Debug)]
pub struct TrainingRun {
    pub model: CkmModel,
    pub history: Vec<EpochRecord>,
    pub batch_size: usize,
}

impl TrainingRun {
    pub fn final_loss(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.train_mse)
    }

    pub fn final_eval_nmse(&self) -> Option<f64> {
        self.history.iter().rev().find_map(|r| r.eval_nmse)
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_mse,eval_nmse")?;
        for r in &self.history {
            let eval = r.eval_nmse.map(|v| format!("{v:.9e}")).unwrap_or_default();
            writeln!(out, "{},{:.9e},{}", r.epoch, r.train_mse, eval)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_divergence(epoch: usize, loss: f64, initial: f64) -> Result<()> {
    if !loss.is_finite() || loss > 10.0 * initial {
        return Err(Error::Divergence { epoch, loss, initial });
    }
    Ok(())
}

/// Fit a model of `kind` to the samples in `ms` by minibatch Adam on the squared error.
///
/// Targets are the sampled dB gains scaled by the samples' own min-max range.
/// KAN heads calibrate their spline domains over the first epoch and freeze
/// them afterwards. When `truth` is given, NMSE on the unsampled cells is
/// recorded according to `cfg.eval_every`.
pub fn train(
    kind: &dyn ModelKind,
    scene: &EnvironmentScene,
    stack: &FeatureStack,
    ms: &MeasurementSet,
    truth: Option<&GroundTruthCkm>,
    cfg: &TrainConfig,
) -> Result<TrainingRun> {
    if ms.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidInput("epochs, batch size and learning rate must be positive".into()));
    }
    if (ms.rows, ms.cols) != (scene.rows(), scene.cols()) {
        return Err(Error::ShapeMismatch { expected: vec![scene.rows(), scene.cols()], got: vec![ms.rows, ms.cols] });
    }
    let target = GainNormalization::from_measurements(ms)?;
    let bounds = scene.bounds();
    let mut model = CkmModel::new(kind, stack, bounds, target, cfg.seed)?;

    let qs = ms.entries.iter().map(|e| normalize_location(scene.cell_center(e.row, e.col), &bounds)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = ms.entries.iter().map(|e| target.normalize(e.gain_db())).collect();

    let eval = truth.map(|t| (normalized_truth(t, &target), ms.complement()));
    let adam = AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() };
    let batch_size = cfg.batch_size.min(qs.len());
    let mut order: Vec<usize> = (0..qs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut initial: Option<f64> = None;
    let (mut bq, mut by) = (Vec::with_capacity(batch_size), Vec::with_capacity(batch_size));

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            bq.clear();
            by.clear();
            bq.extend(chunk.iter().map(|&i| qs[i]));
            by.extend(chunk.iter().map(|&i| ys[i]));
            let (loss, grads) = model.loss_and_gradients(&bq, &by, epoch == 0)?;
            model.store_mut().adam_step(&grads, &adam)?;
            total += loss * chunk.len() as f64;
        }
        let train_mse = total / qs.len() as f64;
        let reference = *initial.get_or_insert(train_mse.max(DIVERGENCE_FLOOR));
        check_divergence(epoch, train_mse, reference)?;
        if epoch == 0 {
            model.freeze_head();
        }
        let last = epoch + 1 == cfg.epochs;
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let eval_nmse = match (&eval, last || due) {
            (Some((grid, domain)), true) => {
                model.encode()?;
                Some(evaluate_nmse(&rasterize_ckm(&model, scene)?, grid, domain)?)
            }
            _ => None,
        };
        history.push(EpochRecord { epoch, train_mse, eval_nmse });
    }
    model.encode()?;
    Ok(TrainingRun { model, history, batch_size })
}
