//! Location-differentiable channel knowledge maps and CKM-driven multi-UAV
//! trajectory, bandwidth and power planning.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod encoder;
pub mod error;
pub mod features;
pub mod grid;
pub mod gridworld;
pub mod jpbto;
pub mod numerics;
pub mod ratemodel;
pub mod regressor;
pub mod training;

pub use error::{Error, Result};
