//! Conditional input tensor for the encoder: sparse measurements, KNN
//! interpolation, LoS and building channels, normalized and stacked.

mod knn;
mod measurements;
mod stack;

pub use knn::knn_interpolate;
pub use measurements::{sample_measurements, Measurement, MeasurementSet};
pub use stack::{
    build_feature_stack, denormalize_location, normalize_location, FeatureStack, GainNormalization, CHANNEL_NAMES, FEATURE_CHANNELS,
};
