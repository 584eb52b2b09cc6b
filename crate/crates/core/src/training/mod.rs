//! Fitting CKM models to sampled measurements and scoring predicted maps.

mod evaluate;
mod trainer;

pub use evaluate::{evaluate_nmse, knn_baseline, normalized_truth, rasterize_ckm};
pub use trainer::{train, EpochRecord, TrainConfig, TrainingRun};
