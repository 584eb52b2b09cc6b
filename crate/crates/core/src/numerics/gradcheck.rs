use crate::error::{Error, Result};

/// Compare an analytic gradient against central differences.
///
/// `f` returns the value and its analytic gradient at a point. The result is
/// `max_i |analytic_i - fd_i| / max(1, |fd_i|)`.
pub fn grad_check<F>(f: F, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (value, analytic) = f(x);
    if !value.is_finite() {
        return Err(Error::NonFinite("function value at base point".into()));
    }
    if analytic.len() != x.len() {
        return Err(Error::ShapeMismatch { expected: vec![x.len()], got: vec![analytic.len()] });
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let (fp, _) = f(&probe);
        probe[i] = x[i] - eps;
        let (fm, _) = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("function value at coordinate {i} +/- eps")));
        }
        let fd = (fp - fm) / (2.0 * eps);
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1.0));
    }
    Ok(worst)
}
