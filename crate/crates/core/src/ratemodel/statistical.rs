use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{compute_los_map, EnvironmentScene, GroundTruthCkm};

/// Distance-only channel `beta0 / d^2` toward a fixed base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticalChannel {
    pub bs_xy: [f64; 2],
    /// UAV altitude minus base-station height.
    pub height_gap_m: f64,
    pub beta0: f64,
    /// Smallest distance used, so the gain stays finite above the BS.
    pub min_distance_m: f64,
}

impl StatisticalChannel {
    pub fn for_scene(scene: &EnvironmentScene, beta0: f64) -> Result<Self> {
        if !(beta0 > 0.0) {
            return Err(Error::InvalidInput("beta0 must be positive".into()));
        }
        Ok(Self {
            bs_xy: scene.bs_xy,
            height_gap_m: scene.uav_height_m - scene.bs_height_m,
            beta0,
            min_distance_m: 0.5 * scene.resolution_m,
        })
    }

    fn distance_sq(&self, q: [f64; 2]) -> (f64, bool) {
        let d2 = (q[0] - self.bs_xy[0]).powi(2) + (q[1] - self.bs_xy[1]).powi(2) + self.height_gap_m.powi(2);
        let floor = self.min_distance_m * self.min_distance_m;
        if d2 < floor {
            (floor, true)
        } else {
            (d2, false)
        }
    }

    pub fn gain(&self, q: [f64; 2]) -> f64 {
        self.beta0 / self.distance_sq(q).0
    }

    /// Gain and its gradient `-2 beta0 d^-4 (q - q_BS)`.
    pub fn gain_with_gradient(&self, q: [f64; 2]) -> (f64, [f64; 2]) {
        let (d2, clamped) = self.distance_sq(q);
        let g = self.beta0 / d2;
        if clamped {
            return (g, [0.0, 0.0]);
        }
        let s = -2.0 * self.beta0 / (d2 * d2);
        (g, [s * (q[0] - self.bs_xy[0]), s * (q[1] - self.bs_xy[1])])
    }
}

/// `beta0 / d^2` with `d` the 3-D BS-to-UAV distance.
pub fn sc_gain(q: [f64; 2], bs_xy: [f64; 2], height_gap_m: f64, beta0: f64) -> f64 {
    StatisticalChannel { bs_xy, height_gap_m, beta0, min_distance_m: 0.0 }.gain(q)
}

pub fn sc_gain_gradient(q: [f64; 2], bs_xy: [f64; 2], height_gap_m: f64, beta0: f64) -> [f64; 2] {
    StatisticalChannel { bs_xy, height_gap_m, beta0, min_distance_m: 0.0 }.gain_with_gradient(q).1
}

/// `beta0` that makes the statistical channel agree with the truth at the
/// line-of-sight cell closest to the map center.
pub fn calibrate_beta0(scene: &EnvironmentScene, truth: &GroundTruthCkm) -> Result<f64> {
    let los = compute_los_map(scene);
    let center = [0.5 * scene.width_m, 0.5 * scene.depth_m];
    let best = los
        .cells()
        .filter(|(_, _, v)| **v == 1)
        .map(|(r, c, _)| {
            let q = scene.cell_center(r, c);
            ((q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2), r, c)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::InvalidInput("scene has no line-of-sight cell".into()))?;
    let (_, r, c) = best;
    let q = scene.cell_center(r, c);
    let ch = StatisticalChannel::for_scene(scene, 1.0)?;
    Ok(truth.gains.get(r, c) * ch.distance_sq(q).0)
}
