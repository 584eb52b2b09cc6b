use crate::numerics::Tensor;

/// The four corner cells and weights used for one bilinear lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleJacobian {
    pub values: Vec<f64>,
    /// `d values / d x_bar` and `d values / d y_bar`.
    pub d_dx: Vec<f64>,
    pub d_dy: Vec<f64>,
    corners: [(usize, usize); 4],
    weights: [f64; 4],
}

struct Stencil {
    corners: [(usize, usize); 4],
    weights: [f64; 4],
    /// Derivatives of the weights with respect to the normalized location.
    dweights_dx: [f64; 4],
    dweights_dy: [f64; 4],
}

/// Cell index, fractional offset and `d pixel / d unit` along one axis.
///
/// The unit coordinate is rescaled to `[-1, 1]` and then mapped onto the
/// node positions `0 ..= n - 1`. A node exactly on a cell boundary belongs to
/// the cell on its right, except at the far edge.
fn axis(u: f64, n: usize) -> (usize, f64, f64) {
    if n == 1 {
        return (0, 0.0, 0.0);
    }
    let inside = (0.0..=1.0).contains(&u);
    let extended = 2.0 * u.clamp(0.0, 1.0) - 1.0;
    let px = (extended + 1.0) * 0.5 * (n - 1) as f64;
    let i = (px.floor() as usize).min(n - 2);
    let slope = if inside { 2.0 * 0.5 * (n - 1) as f64 } else { 0.0 };
    (i, px - i as f64, slope)
}

fn stencil(shape: &[usize], q: [f64; 2]) -> Stencil {
    let (h, w) = (shape[1], shape[2]);
    let (i, mu, sx) = axis(q[0], h);
    let (j, nu, sy) = axis(q[1], w);
    let i1 = (i + 1).min(h - 1);
    let j1 = (j + 1).min(w - 1);
    Stencil {
        corners: [(i, j), (i1, j), (i, j1), (i1, j1)],
        weights: [(1.0 - mu) * (1.0 - nu), mu * (1.0 - nu), (1.0 - mu) * nu, mu * nu],
        dweights_dx: [-(1.0 - nu) * sx, (1.0 - nu) * sx, -nu * sx, nu * sx],
        dweights_dy: [-(1.0 - mu) * sy, -mu * sy, (1.0 - mu) * sy, mu * sy],
    }
}

/// Sample every channel of a `[D, H, W]` map at the unit location `q`.
pub fn bilinear_sample(feature_map: &Tensor, q: [f64; 2]) -> Vec<f64> {
    let st = stencil(feature_map.shape(), q);
    let w = feature_map.shape()[2];
    (0..feature_map.shape()[0])
        .map(|d| {
            let ch = feature_map.channel(d);
            st.corners.iter().zip(&st.weights).map(|((r, c), wt)| wt * ch[r * w + c]).sum()
        })
        .collect()
}

/// Sampled values together with their derivatives with respect to `q`.
pub fn bilinear_sample_with_jacobian(feature_map: &Tensor, q: [f64; 2]) -> SampleJacobian {
    let st = stencil(feature_map.shape(), q);
    let w = feature_map.shape()[2];
    let depth = feature_map.shape()[0];
    let mut values = Vec::with_capacity(depth);
    let mut d_dx = Vec::with_capacity(depth);
    let mut d_dy = Vec::with_capacity(depth);
    for d in 0..depth {
        let ch = feature_map.channel(d);
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for k in 0..4 {
            let (r, c) = st.corners[k];
            let x = ch[r * w + c];
            v += st.weights[k] * x;
            gx += st.dweights_dx[k] * x;
            gy += st.dweights_dy[k] * x;
        }
        values.push(v);
        d_dx.push(gx);
        d_dy.push(gy);
    }
    SampleJacobian { values, d_dx, d_dy, corners: st.corners, weights: st.weights }
}

impl SampleJacobian {
    /// Scatter `d loss / d values` into a feature-map gradient.
    pub fn scatter(&self, upstream: &[f64], grad_map: &mut Tensor) {
        let w = grad_map.shape()[2];
        for (d, up) in upstream.iter().enumerate() {
            let ch = grad_map.channel_mut(d);
            for k in 0..4 {
                let (r, c) = self.corners[k];
                ch[r * w + c] += self.weights[k] * up;
            }
        }
    }
}

/// Accumulate `d loss / d feature_map` for one lookup at `q`.
pub fn bilinear_backward(q: [f64; 2], upstream: &[f64], grad_map: &mut Tensor) {
    let st = stencil(grad_map.shape(), q);
    let w = grad_map.shape()[2];
    for (d, up) in upstream.iter().enumerate() {
        let ch = grad_map.channel_mut(d);
        for k in 0..4 {
            let (r, c) = st.corners[k];
            ch[r * w + c] += st.weights[k] * up;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(d: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[d, h, w], (0..d * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn node_returns_node_value() {
        let m = random_map(3, 5, 4, 0);
        let s = bilinear_sample(&m, [2.0 / 4.0, 1.0 / 3.0]);
        for d in 0..3 {
            assert!((s[d] - m.channel(d)[2 * 4 + 1]).abs() < 1e-12);
        }
        let s = bilinear_sample(&m, [1.0, 1.0]);
        assert!((s[0] - m.channel(0)[19]).abs() < 1e-12);
    }

    #[test]
    fn cell_center_is_corner_mean() {
        let m = Tensor::from_vec(&[1, 2, 2], vec![0.0, 2.0, 1.0, 3.0]).unwrap();
        assert!((bilinear_sample(&m, [0.5, 0.5])[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = random_map(4, 6, 7, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-7;
        for _ in 0..200 {
            let q = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
            let jac = bilinear_sample_with_jacobian(&m, q);
            let px = q[0] * 5.0;
            let py = q[1] * 6.0;
            let near = |p: f64| (p - p.round()).abs() < 1e-5;
            if near(px) || near(py) {
                continue;
            }
            let fx = (bilinear_sample(&m, [q[0] + h, q[1]]), bilinear_sample(&m, [q[0] - h, q[1]]));
            let fy = (bilinear_sample(&m, [q[0], q[1] + h]), bilinear_sample(&m, [q[0], q[1] - h]));
            for d in 0..4 {
                assert!((jac.d_dx[d] - (fx.0[d] - fx.1[d]) / (2.0 * h)).abs() < 1e-6);
                assert!((jac.d_dy[d] - (fy.0[d] - fy.1[d]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn boundary_gradient_is_right_limit() {
        let m = random_map(1, 5, 5, 3);
        let q = [0.5, 0.3];
        let at = bilinear_sample_with_jacobian(&m, q);
        let right = bilinear_sample_with_jacobian(&m, [0.5 + 1e-9, 0.3]);
        assert!((at.d_dx[0] - right.d_dx[0]).abs() < 1e-6);
    }

    #[test]
    fn backward_is_adjoint_of_sampling() {
        let m = random_map(3, 4, 4, 4);
        let q = [0.37, 0.81];
        let up = [0.3, -1.2, 0.7];
        let mut g = Tensor::zeros(&[3, 4, 4]);
        bilinear_backward(q, &up, &mut g);
        let lhs: f64 = bilinear_sample(&m, q).iter().zip(&up).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.data().iter().zip(m.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let mut g2 = Tensor::zeros(&[3, 4, 4]);
        bilinear_sample_with_jacobian(&m, q).scatter(&up, &mut g2);
        assert_eq!(g, g2);
    }

    #[test]
    fn continuous_across_cell_boundaries() {
        let m = random_map(2, 5, 5, 5);
        for eps in [1e-3, 1e-6, 1e-9] {
            let a = bilinear_sample(&m, [0.5 - eps, 0.4]);
            let b = bilinear_sample(&m, [0.5 + eps, 0.4]);
            assert!((a[0] - b[0]).abs() < 10.0 * eps);
        }
    }
}
