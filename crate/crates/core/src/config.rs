use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical settings shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight on the new iterate in damped successive substitution.
    pub damping: f64,
    /// Stage-2 convergence threshold on the largest share update.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on downstream effort.
    pub effort_cap: f64,
    /// Shares are capped here so the markup `1/(1-s)` stays finite.
    pub share_ceiling: f64,
    /// Stage-1 outer loop threshold on the largest QoS update.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Relative step for finite differences.
    pub fd_step: f64,
    /// Number of trailing outer iterates kept on a Stage-1 solution.
    pub trail_len: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-9,
            max_iter: 10_000,
            effort_cap: 10.0,
            share_ceiling: 1.0 - 1e-9,
            outer_tol: 1e-10,
            outer_max_iter: 5_000,
            fd_step: 1e-4,
            trail_len: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("solver.damping", "must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::invalid("solver.tol", "tolerances must be positive"));
        }
        if self.max_iter == 0 || self.outer_max_iter == 0 {
            return Err(Error::invalid("solver.max_iter", "must be at least 1"));
        }
        if !(self.effort_cap >= 0.0) || !self.effort_cap.is_finite() {
            return Err(Error::invalid("solver.effort_cap", "must be finite and non-negative"));
        }
        if !(self.share_ceiling > 0.0 && self.share_ceiling < 1.0) {
            return Err(Error::invalid("solver.share_ceiling", "must lie in (0, 1)"));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return Err(Error::invalid("solver.fd_step", "must lie in (0, 0.1)"));
        }
        Ok(())
    }
}
