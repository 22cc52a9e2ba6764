//! Matched-pair QoS audit simulator and estimators.

pub mod bimodality;
pub mod episode;
pub mod power;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub use bimodality::{bimodality_detect, simulate_benchmark_scores, BenchmarkScores, BenchmarkSim, BimodalityReport};
pub use episode::{degradation_episode, Attribution, EpisodeConfig, EpisodeReport};
pub use power::{power_analysis, PowerCell, PowerSurface};

/// Random stream for replication `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Confounders {
    /// Scale of the per-day capacity shock.
    pub capacity_shock: f64,
    /// Amplitude of the within-day sinusoidal load cycle.
    pub time_of_day: f64,
    /// Linear workload drift per day.
    pub workload_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strata {
    pub regions: u16,
    pub tiers: u16,
    pub volumes: u16,
}

impl Strata {
    pub fn count(&self) -> usize {
        self.regions as usize * self.tiers as usize * self.volumes as usize
    }

    fn iter(&self) -> impl Iterator<Item = (u16, u16, u16)> + '_ {
        (0..self.regions).flat_map(move |r| (0..self.tiers).flat_map(move |t| (0..self.volumes).map(move |v| (r, t, v))))
    }
}

/// How strongly the confounders act on each channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelLoading {
    pub first_party: f64,
    pub api: f64,
}

impl Default for ChannelLoading {
    fn default() -> Self {
        Self { first_party: 1.0, api: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Injected first-party advantage, quality units.
    pub true_gap: f64,
    pub noise_sd: f64,
    #[serde(default)]
    pub confounders: Confounders,
    pub strata: Strata,
    pub samples_per_stratum: usize,
    pub horizon_days: u32,
    pub seed: u64,
    #[serde(default = "default_base")]
    pub base_qos: f64,
    #[serde(default = "default_stratum_sd")]
    pub stratum_effect_sd: f64,
    #[serde(default)]
    pub loading: ChannelLoading,
}

fn default_base() -> f64 {
    0.7
}

fn default_stratum_sd() -> f64 {
    0.05
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("noise_sd", self.noise_sd),
            ("confounders.capacity_shock", self.confounders.capacity_shock),
            ("confounders.time_of_day", self.confounders.time_of_day),
            ("confounders.workload_drift", self.confounders.workload_drift),
            ("stratum_effect_sd", self.stratum_effect_sd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("audit.{name}"), "must be finite and >= 0"));
            }
        }
        for (name, v) in [("true_gap", self.true_gap), ("base_qos", self.base_qos), ("loading.first_party", self.loading.first_party), ("loading.api", self.loading.api)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("audit.{name}"), "must be finite"));
            }
        }
        if self.samples_per_stratum == 0 {
            return Err(Error::invalid("audit.samples_per_stratum", "must be at least 1"));
        }
        if self.horizon_days == 0 {
            return Err(Error::invalid("audit.horizon_days", "must be at least 1"));
        }
        if self.strata.count() == 0 {
            return Err(Error::invalid("audit.strata", "every dimension needs at least one level"));
        }
        Ok(())
    }

    pub fn n_pairs(&self) -> usize {
        self.strata.count() * self.samples_per_stratum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    FirstParty,
    Api,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub pair_id: u64,
    pub day: u32,
    pub region: u16,
    pub tier: u16,
    pub volume: u16,
    pub channel: Channel,
    pub qos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDataset {
    pub rows: Vec<AuditRow>,
    pub true_gap: f64,
    pub seed: u64,
    pub stream: u64,
}

pub fn generate(config: &AuditConfig) -> Result<AuditDataset> {
    generate_stream(config, 0)
}

/// Dataset for replication `stream`; the same `(config, stream)` always
/// yields the same rows.
pub fn generate_stream(config: &AuditConfig, stream: u64) -> Result<AuditDataset> {
    generate_with(config, stream, |_| (0.0, 0.0))
}

/// Core generator. `extra(day)` adds `(first_party, api)` shifts on top of
/// the pair-level model.
pub(crate) fn generate_with<F: Fn(u32) -> (f64, f64)>(config: &AuditConfig, stream: u64, extra: F) -> Result<AuditDataset> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, stream);
    let strata: Vec<(u16, u16, u16)> = config.strata.iter().collect();
    let stratum_effect: Vec<f64> = strata.iter().map(|_| config.stratum_effect_sd * normal(&mut rng)).collect();
    let day_shock: Vec<f64> = (0..config.horizon_days)
        .map(|_| config.confounders.capacity_shock * normal(&mut rng))
        .collect();
    let mut rows = Vec::with_capacity(2 * config.n_pairs());
    let mut pair_id = 0u64;
    for (h, &(region, tier, volume)) in strata.iter().enumerate() {
        for j in 0..config.samples_per_stratum {
            let day = (j % config.horizon_days as usize) as u32;
            let hour: f64 = rng.gen_range(0.0..24.0);
            let confound = day_shock[day as usize]
                + config.confounders.time_of_day * (2.0 * PI * hour / 24.0).sin()
                + config.confounders.workload_drift * day as f64;
            let common = config.base_qos + stratum_effect[h];
            let (fp_extra, api_extra) = extra(day);
            let fp = common + config.loading.first_party * confound + config.true_gap + fp_extra + config.noise_sd * normal(&mut rng);
            let api = common + config.loading.api * confound + api_extra + config.noise_sd * normal(&mut rng);
            for (channel, qos) in [(Channel::FirstParty, fp), (Channel::Api, api)] {
                rows.push(AuditRow { pair_id, day, region, tier, volume, channel, qos });
            }
            pair_id += 1;
        }
    }
    Ok(AuditDataset { rows, true_gap: config.true_gap, seed: config.seed, stream })
}

/// One matched pair: first-party minus API.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Pair {
    pub day: u32,
    pub stratum: (u16, u16, u16),
    pub first_party: f64,
    pub api: f64,
}

impl Pair {
    pub fn difference(&self) -> f64 {
        self.first_party - self.api
    }
}

pub(crate) fn pairs(data: &AuditDataset) -> Result<Vec<Pair>> {
    let mut by_id: BTreeMap<u64, (Option<&AuditRow>, Option<&AuditRow>)> = BTreeMap::new();
    for row in &data.rows {
        let slot = by_id.entry(row.pair_id).or_default();
        let target = match row.channel {
            Channel::FirstParty => &mut slot.0,
            Channel::Api => &mut slot.1,
        };
        if target.replace(row).is_some() {
            return Err(Error::domain(format!("pair {} has two {:?} rows", row.pair_id, row.channel)));
        }
    }
    by_id
        .into_iter()
        .map(|(id, slot)| match slot {
            (Some(f), Some(a)) => {
                if f.day != a.day || (f.region, f.tier, f.volume) != (a.region, a.tier, a.volume) {
                    return Err(Error::domain(format!("pair {id} is not matched on day and stratum")));
                }
                Ok(Pair { day: f.day, stratum: (f.region, f.tier, f.volume), first_party: f.qos, api: a.qos })
            }
            _ => Err(Error::domain(format!("pair {id} is missing a channel"))),
        })
        .collect()
}

pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Least-squares slope of `ys` on `xs`; `None` without spread in `xs`.
pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub region: u16,
    pub tier: u16,
    pub volume: u16,
    pub pairs: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub epsilon: f64,
    /// Lower confidence bound strictly above `epsilon`.
    pub exceeds_tolerance: bool,
    pub pairs_used: usize,
    pub strata: Vec<StratumEstimate>,
    pub notes: Vec<String>,
    /// Slope of daily mean differences over the horizon.
    pub trend_slope: Option<f64>,
}

/// Stratified paired-difference estimate with a two-sided normal interval
/// at level `1 - alpha_level`.
pub fn estimate(data: &AuditDataset, epsilon: f64, alpha_level: f64) -> Result<AuditEstimate> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::invalid("alpha_level", "must lie in (0, 1)"));
    }
    if !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", "must be finite"));
    }
    let pairs = pairs(data)?;
    if pairs.len() < 2 {
        return Err(Error::domain("estimation needs at least 2 pairs"));
    }
    let mut by_stratum: BTreeMap<(u16, u16, u16), Vec<f64>> = BTreeMap::new();
    let mut by_day: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for p in &pairs {
        by_stratum.entry(p.stratum).or_default().push(p.difference());
        let d = by_day.entry(p.day).or_default();
        d.0 += p.difference();
        d.1 += 1;
    }
    let mut notes = Vec::new();
    let mut strata = Vec::new();
    for (&(region, tier, volume), diffs) in &by_stratum {
        if diffs.len() < 2 {
            notes.push(format!("stratum ({region}, {tier}, {volume}) excluded: {} pair", diffs.len()));
            continue;
        }
        let (mean, var) = mean_var(diffs);
        strata.push(StratumEstimate { region, tier, volume, pairs: diffs.len(), mean, sd: var.sqrt() });
    }
    let used: usize = strata.iter().map(|s| s.pairs).sum();
    if used < 2 {
        return Err(Error::domain("no stratum has at least 2 pairs"));
    }
    let total = used as f64;
    let est: f64 = strata.iter().map(|s| s.pairs as f64 / total * s.mean).sum();
    let var: f64 = strata
        .iter()
        .map(|s| {
            let w = s.pairs as f64 / total;
            w * w * s.sd * s.sd / s.pairs as f64
        })
        .sum();
    let se = var.sqrt();
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha_level / 2.0);
    let (ci_low, ci_high) = (est - z * se, est + z * se);
    let days: Vec<f64> = by_day.keys().map(|&d| d as f64).collect();
    let means: Vec<f64> = by_day.values().map(|(s, n)| s / *n as f64).collect();
    Ok(AuditEstimate {
        estimate: est,
        standard_error: se,
        ci_low,
        ci_high,
        confidence: 1.0 - alpha_level,
        epsilon,
        exceeds_tolerance: ci_low > epsilon,
        pairs_used: used,
        strata,
        notes,
        trend_slope: ols_slope(&days, &means),
    })
}
