use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thermal noise density of -174 dBm/Hz in W/Hz.
pub const DBM_PER_HZ_174: f64 = 3.981_071_705_534_969e-21;

/// Radio and mobility limits of one planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub b_max_hz: f64,
    pub p_max_w: f64,
    pub n0_w_per_hz: f64,
    pub r_min_bps: f64,
    pub v_max_mps: f64,
    pub tau_s: f64,
    pub epsilon_alpha: f64,
    pub d_min_m: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            b_max_hz: 10e6,
            p_max_w: 10.0,
            n0_w_per_hz: DBM_PER_HZ_174,
            r_min_bps: 0.0,
            v_max_mps: 30.0,
            tau_s: 2.0,
            epsilon_alpha: 1e-6,
            d_min_m: 5.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self, uavs: usize) -> Result<()> {
        let positive = [
            ("B_max", self.b_max_hz),
            ("P_max", self.p_max_w),
            ("N0", self.n0_w_per_hz),
            ("V_max", self.v_max_mps),
            ("tau", self.tau_s),
            ("epsilon", self.epsilon_alpha),
            ("D_min", self.d_min_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.r_min_bps >= 0.0) {
            return Err(Error::InvalidInput("R_min must be non-negative".into()));
        }
        if uavs == 0 || self.epsilon_alpha * uavs as f64 >= 1.0 {
            return Err(Error::InvalidInput(format!("epsilon {} must be below 1/M for M = {uavs}", self.epsilon_alpha)));
        }
        Ok(())
    }

    /// Distance one UAV may cover in one slot.
    pub fn step_m(&self) -> f64 {
        self.v_max_mps * self.tau_s
    }

    /// `p H / (N0 B_max)`, the bandwidth-normalized SNR numerator.
    pub fn k_bandwidth(&self, power_w: f64, gain: f64) -> f64 {
        power_w * gain / (self.n0_w_per_hz * self.b_max_hz)
    }
}

/// `alpha B log2(1 + p H / (N0 alpha B))` in bits/s.
pub fn rate(alpha: f64, power_w: f64, gain: f64, budget: &LinkBudget) -> f64 {
    if alpha <= 0.0 {
        return 0.0;
    }
    let b = alpha * budget.b_max_hz;
    b * (power_w * gain / (budget.n0_w_per_hz * b)).ln_1p() / LN_2
}

/// `dR/dalpha = B [log2(1 + K/alpha) - K / ((alpha + K) ln 2)]` with `K = p H / (N0 B)`.
pub fn rate_d_alpha(alpha: f64, power_w: f64, gain: f64, budget: &LinkBudget) -> f64 {
    let k = budget.k_bandwidth(power_w, gain);
    budget.b_max_hz * ((k / alpha).ln_1p() / LN_2 - k / ((alpha + k) * LN_2))
}

/// `d2R/dalpha2 = -B K^2 / (alpha (K + alpha)^2 ln 2)`, never positive.
pub fn rate_d2_alpha(alpha: f64, power_w: f64, gain: f64, budget: &LinkBudget) -> f64 {
    let k = budget.k_bandwidth(power_w, gain);
    -budget.b_max_hz * k * k / (alpha * (k + alpha).powi(2) * LN_2)
}

/// `dR/dp = alpha B H / ((N0 alpha B + p H) ln 2)`.
pub fn rate_d_power(alpha: f64, power_w: f64, gain: f64, budget: &LinkBudget) -> f64 {
    let b = alpha * budget.b_max_hz;
    b * gain / ((budget.n0_w_per_hz * b + power_w * gain) * LN_2)
}

/// `dR/dH = alpha B p / ((N0 alpha B + p H) ln 2)`.
pub fn rate_d_gain(alpha: f64, power_w: f64, gain: f64, budget: &LinkBudget) -> f64 {
    let b = alpha * budget.b_max_hz;
    b * power_w / ((budget.n0_w_per_hz * b + power_w * gain) * LN_2)
}

pub fn average_rate(rates: &[f64]) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    rates.iter().sum::<f64>() / rates.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn budget() -> LinkBudget {
        LinkBudget { b_max_hz: 1e7, n0_w_per_hz: 1e-20, ..Default::default() }
    }

    #[test]
    fn unit_snr_gives_bandwidth() {
        let b = budget();
        let alpha = 0.3;
        let gain = b.n0_w_per_hz * alpha * b.b_max_hz / 2.0;
        assert!((rate(alpha, 2.0, gain, &b) - alpha * b.b_max_hz).abs() < 1e-6);
        assert_eq!(rate(alpha, 0.0, gain, &b), 0.0);
    }

    #[test]
    fn snr_ten_example() {
        let b = budget();
        let gain = 10.0 * b.n0_w_per_hz * 0.5 * b.b_max_hz / 10.0;
        let r = rate(0.5, 10.0, gain, &b);
        assert!((r - 0.5e7 * 11f64.log2()).abs() < 1e-6 * r);
    }

    #[test]
    fn noise_density_is_minus_174_dbm() {
        assert!((10.0 * (DBM_PER_HZ_174 * 1e3).log10() + 174.0).abs() < 1e-12);
    }

    #[test]
    fn averages() {
        assert_eq!(average_rate(&[3.0; 7]), 3.0);
        assert_eq!(average_rate(&[0.0; 4]), 0.0);
        let v = [1.5, 2.25, 9.0, 0.125];
        let mut acc = 0.0;
        for x in v {
            acc += x;
        }
        assert!((average_rate(&v) - acc / 4.0).abs() < 1e-15);
    }

    #[test]
    fn epsilon_must_be_below_inverse_uav_count() {
        let b = LinkBudget { epsilon_alpha: 0.3, ..budget() };
        assert!(b.validate(3).is_ok());
        assert!(b.validate(4).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_match_differences(alpha in 0.05f64..1.0, p in 0.1f64..10.0, g in 1e-13f64..1e-9) {
            let b = budget();
            let h = 1e-6;
            let fd_a = (rate(alpha + h, p, g, &b) - rate(alpha - h, p, g, &b)) / (2.0 * h);
            prop_assert!((rate_d_alpha(alpha, p, g, &b) - fd_a).abs() <= 1e-5 * fd_a.abs().max(1.0));
            let fd_p = (rate(alpha, p + h, g, &b) - rate(alpha, p - h, g, &b)) / (2.0 * h);
            prop_assert!((rate_d_power(alpha, p, g, &b) - fd_p).abs() <= 1e-5 * fd_p.abs().max(1.0));
            let hg = g * 1e-6;
            let fd_g = (rate(alpha, p, g + hg, &b) - rate(alpha, p, g - hg, &b)) / (2.0 * hg);
            prop_assert!((rate_d_gain(alpha, p, g, &b) - fd_g).abs() <= 1e-5 * fd_g.abs());
            let fd2 = (rate_d_alpha(alpha + h, p, g, &b) - rate_d_alpha(alpha - h, p, g, &b)) / (2.0 * h);
            prop_assert!((rate_d2_alpha(alpha, p, g, &b) - fd2).abs() <= 1e-4 * fd2.abs().max(1.0));
        }

        #[test]
        fn concave_and_increasing(alpha in 0.01f64..1.0, p in 0.1f64..10.0, g in 1e-13f64..1e-9) {
            let b = budget();
            prop_assert!(rate_d2_alpha(alpha, p, g, &b) <= 0.0);
            prop_assert!(rate(alpha, p * 1.01, g, &b) > rate(alpha, p, g, &b));
            prop_assert!(rate(alpha, p, g * 1.01, &b) > rate(alpha, p, g, &b));
            let dp = 0.05;
            let second = rate(alpha, p + dp, g, &b) - 2.0 * rate(alpha, p, g, &b) + rate(alpha, p - dp, g, &b);
            prop_assert!(second <= 1e-9 * rate(alpha, p, g, &b));
        }
    }
}
