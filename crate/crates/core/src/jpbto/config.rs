use serde::{Deserialize, Serialize};

use crate::convex::SolverConfig;
use crate::error::{Error, Result};
use crate::ratemodel::LinkBudget;

/// Iteration limits and thresholds of the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoConfig {
    pub l_max: usize,
    pub i_max: usize,
    pub j_max: usize,
    /// Normalized trajectory change that ends the outer loop.
    pub eps_ao: f64,
    pub eps_alpha: f64,
    pub eps_q: f64,
    /// Per-waypoint trust box half-width in meters; `None` uses one slot of travel.
    pub trust_radius_m: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            l_max: 15,
            i_max: 50,
            j_max: 50,
            eps_ao: 1e-4,
            eps_alpha: 1e-4,
            eps_q: 1e-4,
            trust_radius_m: None,
            solver: SolverConfig::default(),
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_max == 0 || self.i_max == 0 || self.j_max == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        for (name, v) in [("eps_ao", self.eps_ao), ("eps_alpha", self.eps_alpha), ("eps_q", self.eps_q)] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if let Some(r) = self.trust_radius_m {
            if !(r > 0.0) {
                return Err(Error::InvalidInput("trust radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn trust_radius(&self, budget: &LinkBudget) -> f64 {
        self.trust_radius_m.unwrap_or_else(|| budget.step_m())
    }
}
