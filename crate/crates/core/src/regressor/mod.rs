//! Location-aware differentiable regression heads and the assembled CKM model.
//!
//! A query location is normalized to the unit square, encoder features are
//! bilinearly sampled there, and `[x, y, features...]` is regressed to a
//! normalized dB gain by an MLP or a B-spline KAN. Gradients with respect to
//! the location are exact away from feature-cell boundaries.

mod bspline;
mod head;
mod kan;
mod mlp;
mod model;
mod registry;
mod sampling;

pub use bspline::{bspline_basis, bspline_basis_derivative, bspline_basis_with_derivative, clamped_uniform_knots};
pub use head::{HeadConfig, Regressor};
pub use kan::{BSplineLayer, InputDomain, KanConfig, KanHead};
pub use mlp::{MlpConfig, MlpHead};
pub use model::{CkmModel, ModelMeta};
pub use registry::{ModelKind, ModelRegistry};
pub use sampling::{bilinear_backward, bilinear_sample, bilinear_sample_with_jacobian, SampleJacobian};
