/// Clamped uniform knot vector on `[0, 1]` with `g` intervals for order `k`:
/// `k` zeros, `g - 1` interior knots, `k` ones.
pub fn clamped_uniform_knots(g: usize, k: usize) -> Vec<f64> {
    assert!(g >= 1 && k >= 1, "need at least one interval and order 1");
    let mut t = Vec::with_capacity(g + 2 * k - 1);
    t.extend(std::iter::repeat_n(0.0, k));
    t.extend((1..g).map(|i| i as f64 / g as f64));
    t.extend(std::iter::repeat_n(1.0, k));
    t
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Order-1 indicators; a point at or past the right end goes to the last non-empty span.
fn indicators(v: f64, knots: &[f64]) -> Vec<f64> {
    let n = knots.len() - 1;
    let mut b = vec![0.0; n];
    let last = *knots.last().expect("non-empty knots");
    if v >= last {
        if let Some(m) = (0..n).rev().find(|&m| knots[m] < knots[m + 1]) {
            b[m] = 1.0;
        }
        return b;
    }
    for m in 0..n {
        if knots[m] <= v && v < knots[m + 1] {
            b[m] = 1.0;
        }
    }
    b
}

/// All Cox-de Boor levels up to order `k`; level `j` holds `knots.len() - j` values.
fn levels(v: f64, knots: &[f64], k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k);
    out.push(indicators(v, knots));
    for order in 2..=k {
        let prev = out.last().expect("previous level");
        let count = knots.len() - order;
        let next = (0..count)
            .map(|m| {
                ratio(v - knots[m], knots[m + order - 1] - knots[m]) * prev[m]
                    + ratio(knots[m + order] - v, knots[m + order] - knots[m + 1]) * prev[m + 1]
            })
            .collect();
        out.push(next);
    }
    out
}

/// Basis values `B_{m,k}(v)` for `m = 0 .. knots.len() - k`.
pub fn bspline_basis(v: f64, knots: &[f64], k: usize) -> Vec<f64> {
    let lo = knots[k - 1];
    let hi = knots[knots.len() - k];
    levels(v.clamp(lo, hi), knots, k).pop().expect("order k level")
}

/// Derivatives `dB_{m,k}/dv` from the order `k - 1` bases.
pub fn bspline_basis_derivative(v: f64, knots: &[f64], k: usize) -> Vec<f64> {
    bspline_basis_with_derivative(v, knots, k).1
}

/// Values and derivatives in a single recursion.
pub fn bspline_basis_with_derivative(v: f64, knots: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = knots[k - 1];
    let hi = knots[knots.len() - k];
    let mut lv = levels(v.clamp(lo, hi), knots, k);
    let values = lv.pop().expect("order k level");
    let count = knots.len() - k;
    if k == 1 {
        return (values, vec![0.0; count]);
    }
    let lower = lv.pop().expect("order k-1 level");
    let scale = (k - 1) as f64;
    let deriv = (0..count)
        .map(|m| scale * (ratio(lower[m], knots[m + k - 1] - knots[m]) - ratio(lower[m + 1], knots[m + k] - knots[m + 1])))
        .collect();
    (values, deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Straight recursive Cox-de Boor, written independently of the table version.
    fn oracle(m: usize, k: usize, v: f64, t: &[f64]) -> f64 {
        if k == 1 {
            let last_nonempty = (0..t.len() - 1).rev().find(|&i| t[i] < t[i + 1]).unwrap();
            if v >= *t.last().unwrap() {
                return if m == last_nonempty { 1.0 } else { 0.0 };
            }
            return if t[m] <= v && v < t[m + 1] { 1.0 } else { 0.0 };
        }
        let mut acc = 0.0;
        let d1 = t[m + k - 1] - t[m];
        if d1 != 0.0 {
            acc += (v - t[m]) / d1 * oracle(m, k - 1, v, t);
        }
        let d2 = t[m + k] - t[m + 1];
        if d2 != 0.0 {
            acc += (t[m + k] - v) / d2 * oracle(m + 1, k - 1, v, t);
        }
        acc
    }

    #[test]
    fn knot_layout() {
        let t = clamped_uniform_knots(8, 4);
        assert_eq!(t.len(), 8 + 2 * 4 - 1);
        assert_eq!(&t[..4], &[0.0; 4]);
        assert_eq!(&t[t.len() - 4..], &[1.0; 4]);
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(bspline_basis(0.3, &t, 4).len(), 8 + 4 - 1);
    }

    #[test]
    fn order_one_is_an_indicator() {
        let t = clamped_uniform_knots(5, 1);
        for v in [0.0, 0.1, 0.2, 0.55, 0.999, 1.0] {
            let b = bspline_basis(v, &t, 1);
            assert_eq!(b.iter().filter(|x| **x == 1.0).count(), 1);
            assert_eq!(b.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn matches_recursive_oracle_at_midpoint() {
        let t = clamped_uniform_knots(10, 4);
        let b = bspline_basis(0.5, &t, 4);
        for (m, value) in b.iter().enumerate() {
            assert!((value - oracle(m, 4, 0.5, &t)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_hat_slopes() {
        let g = 4;
        let t = clamped_uniform_knots(g, 2);
        let d = bspline_basis_derivative(0.3, &t, 2);
        let nonzero: Vec<f64> = d.into_iter().filter(|x| *x != 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!((nonzero[0] + g as f64).abs() < 1e-12);
        assert!((nonzero[1] - g as f64).abs() < 1e-12);
    }

    #[test]
    fn right_end_is_interpolated() {
        let t = clamped_uniform_knots(8, 4);
        let b = bspline_basis(1.0, &t, 4);
        assert!((b.last().unwrap() - 1.0).abs() < 1e-12);
        let b0 = bspline_basis(0.0, &t, 4);
        assert!((b0[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let t = clamped_uniform_knots(10, 4);
        let h = 1e-6;
        for i in 0..100 {
            let v = 0.01 + 0.98 * (i as f64 + 0.37) / 100.0;
            let d = bspline_basis_derivative(v, &t, 4);
            let p = bspline_basis(v + h, &t, 4);
            let q = bspline_basis(v - h, &t, 4);
            for m in 0..d.len() {
                assert!((d[m] - (p[m] - q[m]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(v in 0.0f64..=1.0, which in 0usize..3) {
            let (g, k) = [(8, 4), (10, 4), (6, 3)][which];
            let t = clamped_uniform_knots(g, k);
            let (b, d) = bspline_basis_with_derivative(v, &t, k);
            prop_assert!(b.iter().all(|x| *x >= 0.0));
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(d.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
