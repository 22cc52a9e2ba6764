use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate, generate_stream, AuditConfig, AuditEstimate};
use crate::error::{Error, Result};

/// Estimates for replications `0..replications`, each on its own stream.
pub fn replicate(config: &AuditConfig, epsilon: f64, alpha_level: f64, replications: u64) -> Result<Vec<AuditEstimate>> {
    (0..replications)
        .into_par_iter()
        .map(|r| estimate(&generate_stream(config, r)?, epsilon, alpha_level))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub gap: f64,
    pub n_pairs: usize,
    pub samples_per_stratum: usize,
    pub replications: u64,
    pub detections: u64,
    pub power: f64,
    /// Monte Carlo standard error of `power`.
    pub mc_se: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSurface {
    pub epsilon: f64,
    pub alpha_level: f64,
    /// Gap-major, then pair count, in grid order.
    pub cells: Vec<PowerCell>,
}

/// Detection frequency over a `(gap, pairs)` grid. Replication `r` uses the
/// same random stream in every cell.
pub fn power_analysis(
    template: &AuditConfig,
    gaps: &[f64],
    n_pairs: &[usize],
    epsilon: f64,
    alpha_level: f64,
    replications: u64,
) -> Result<PowerSurface> {
    if gaps.is_empty() || n_pairs.is_empty() {
        return Err(Error::invalid("power grid", "gap and pair grids must be non-empty"));
    }
    if replications == 0 {
        return Err(Error::invalid("replications", "must be at least 1"));
    }
    let strata = template.strata.count();
    let mut cells = Vec::with_capacity(gaps.len() * n_pairs.len());
    for &gap in gaps {
        for &n in n_pairs {
            let samples = n.div_ceil(strata).max(1);
            let cfg = AuditConfig { true_gap: gap, samples_per_stratum: samples, ..*template };
            let ests = replicate(&cfg, epsilon, alpha_level, replications)?;
            let detections = ests.iter().filter(|e| e.exceeds_tolerance).count() as u64;
            let power = detections as f64 / replications as f64;
            cells.push(PowerCell {
                gap,
                n_pairs: samples * strata,
                samples_per_stratum: samples,
                replications,
                detections,
                power,
                mc_se: (power * (1.0 - power) / replications as f64).sqrt(),
                mean_estimate: ests.iter().map(|e| e.estimate).sum::<f64>() / replications as f64,
            });
        }
    }
    Ok(PowerSurface { epsilon, alpha_level, cells })
}
