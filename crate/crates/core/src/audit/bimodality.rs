use serde::{Deserialize, Serialize};

use super::{mean_var, normal, stream_rng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScores {
    pub partner: Vec<f64>,
    pub non_partner: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSim {
    /// Expected score of the frontier model.
    pub frontier_score: f64,
    pub tau: f64,
    /// Exclusivity; non-partners get the general model only when positive.
    pub kappa: f64,
    pub n_partner: usize,
    pub n_non_partner: usize,
    pub noise_sd: f64,
}

impl BenchmarkSim {
    pub fn validate(&self) -> Result<()> {
        if self.n_partner == 0 || self.n_non_partner == 0 {
            return Err(Error::invalid("bimodality", "both customer classes need members"));
        }
        if !(self.noise_sd >= 0.0 && self.tau >= 0.0 && (0.0..=1.0).contains(&self.kappa) && self.frontier_score.is_finite()) {
            return Err(Error::invalid("bimodality", "needs noise_sd >= 0, tau >= 0, kappa in [0, 1]"));
        }
        Ok(())
    }
}

pub fn simulate_benchmark_scores(sim: &BenchmarkSim, seed: u64, stream: u64) -> Result<BenchmarkScores> {
    sim.validate()?;
    let mut rng = stream_rng(seed, stream);
    let gated_score = if sim.kappa > 0.0 {
        sim.frontier_score * (1.0 - sim.tau)
    } else {
        sim.frontier_score
    };
    let partner = (0..sim.n_partner)
        .map(|_| sim.frontier_score + sim.noise_sd * normal(&mut rng))
        .collect();
    let non_partner = (0..sim.n_non_partner)
        .map(|_| gated_score + sim.noise_sd * normal(&mut rng))
        .collect();
    Ok(BenchmarkScores { partner, non_partner })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalityReport {
    /// Standardized separation; `None` when undefined.
    pub separation: Option<f64>,
    pub threshold: f64,
    pub detected: bool,
    pub undefined: bool,
    pub mean_partner: f64,
    pub mean_non_partner: f64,
    pub sd_partner: f64,
    pub sd_non_partner: f64,
    /// `(mean_P - mean_notP) / mean_P`.
    pub implied_tau: Option<f64>,
}

pub fn bimodality_detect(scores: &BenchmarkScores, threshold: f64) -> Result<BimodalityReport> {
    if scores.partner.is_empty() || scores.non_partner.is_empty() {
        return Err(Error::domain("both score classes must be non-empty"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", "must be > 0"));
    }
    let (mp, vp) = mean_var(&scores.partner);
    let (mn, vn) = mean_var(&scores.non_partner);
    let pooled = ((vp + vn) / 2.0).sqrt();
    let diff = (mp - mn).abs();
    let (separation, undefined) = if pooled > 0.0 {
        (Some(diff / pooled), false)
    } else if diff > 0.0 {
        (Some(f64::INFINITY), false)
    } else {
        (None, true)
    };
    Ok(BimodalityReport {
        separation,
        threshold,
        detected: separation.is_some_and(|d| d > threshold),
        undefined,
        mean_partner: mp,
        mean_non_partner: mn,
        sd_partner: vp.sqrt(),
        sd_non_partner: vn.sqrt(),
        implied_tau: if mp != 0.0 { Some((mp - mn) / mp) } else { None },
    })
}
