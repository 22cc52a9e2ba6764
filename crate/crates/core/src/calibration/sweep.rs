use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profiles::FirmProfile;
use super::riskmap::{risk_map, RiskBand, RiskMapping, RiskSettings};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::model::BaselineParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Common inference dependence for every profile.
    Alpha,
    /// Common switching cost for every profile.
    SwitchingCost,
    /// Common integration breadth for every profile.
    Lambda,
    /// Common downstream margin `m_U` for every profile.
    Margin,
    MarginScale,
    Eta,
    Gamma,
    PApi,
    Rho0,
    K,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::SwitchingCost => "switching_cost",
            SweepParam::Lambda => "lambda",
            SweepParam::Margin => "margin",
            SweepParam::MarginScale => "margin_scale",
            SweepParam::Eta => "eta",
            SweepParam::Gamma => "gamma",
            SweepParam::PApi => "p_api",
            SweepParam::Rho0 => "rho0",
            SweepParam::K => "k",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Free-form record of what the sweep holds fixed.
    #[serde(default)]
    pub held_fixed: Vec<String>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let field = format!("sweep.{}", self.parameter.name());
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::invalid(field, "needs finite lo < hi"));
        }
        if self.points < 2 {
            return Err(Error::invalid(field, "needs at least 2 grid points"));
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub parameter: SweepParam,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub name: String,
    pub gap: Option<f64>,
    pub band: RiskBand,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub values: Vec<ParamValue>,
    pub rows: Vec<PointResult>,
    pub top_two: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmInterval {
    pub name: String,
    pub baseline: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandInvariance {
    pub name: String,
    pub baseline_band: RiskBand,
    pub invariant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaBand {
    pub name: String,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub gap_at_lo: Option<f64>,
    pub gap_at_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub specs: Vec<SweepSpec>,
    pub baseline_top_two: Vec<String>,
    pub points: Vec<SweepPoint>,
    pub intervals: Vec<FirmInterval>,
    /// Argmax and second-largest gap are the same at every point.
    pub ranking_invariant: bool,
    pub bands: Vec<BandInvariance>,
    pub eta_band: Vec<EtaBand>,
    pub failures: Vec<SweepFailure>,
}

struct Inputs {
    profiles: Vec<FirmProfile>,
    baseline: BaselineParams,
    settings: RiskSettings,
}

fn apply(values: &[ParamValue], profiles: &[FirmProfile], baseline: &BaselineParams, settings: &RiskSettings) -> Inputs {
    let mut out = Inputs {
        profiles: profiles.to_vec(),
        baseline: baseline.clone(),
        settings: *settings,
    };
    for pv in values {
        let v = pv.value;
        match pv.parameter {
            SweepParam::Alpha => out.profiles.iter_mut().for_each(|p| p.alpha.value = v),
            SweepParam::Lambda => out.profiles.iter_mut().for_each(|p| p.lambda.value = v),
            SweepParam::SwitchingCost => out.profiles.iter_mut().for_each(|p| {
                if let Some(s) = p.switching_cost.as_mut() {
                    s.value = v;
                }
            }),
            SweepParam::Margin => out.profiles.iter_mut().for_each(|p| {
                if let Some(m) = p.margin.as_mut() {
                    m.value = v;
                }
            }),
            SweepParam::MarginScale => out.settings.margin_scale = v,
            SweepParam::Eta => out.baseline.eta = v,
            SweepParam::Gamma => out.baseline.gamma = v,
            SweepParam::PApi => out.baseline.p_api = v,
            SweepParam::Rho0 => out.baseline.rho0 = v,
            SweepParam::K => out.baseline.k = v,
        }
    }
    out
}

fn run_at(values: &[ParamValue], profiles: &[FirmProfile], baseline: &BaselineParams, settings: &RiskSettings, cfg: &SolverConfig) -> Result<RiskMapping> {
    let x = apply(values, profiles, baseline, settings);
    risk_map(&x.profiles, &x.baseline, &x.settings, cfg)
}

fn grid(specs: &[SweepSpec]) -> Vec<Vec<ParamValue>> {
    let total: usize = specs.iter().map(|s| s.points).product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; specs.len()];
            for (d, s) in specs.iter().enumerate().rev() {
                idx[d] = flat % s.points;
                flat /= s.points;
            }
            specs
                .iter()
                .zip(idx)
                .map(|(s, i)| ParamValue { parameter: s.parameter, value: s.value(i) })
                .collect()
        })
        .collect()
}

/// Re-runs the risk map at every point of the Cartesian product of `specs`.
/// The entry reference QoS is pinned at the unperturbed baseline so that
/// structural sweeps move the entry curve, not its normalization.
pub fn sensitivity_sweep(
    profiles: &[FirmProfile],
    baseline: &BaselineParams,
    settings: &RiskSettings,
    cfg: &SolverConfig,
    specs: &[SweepSpec],
    eta_band: (f64, f64),
) -> Result<SweepReport> {
    for s in specs {
        s.validate()?;
    }
    let pinned = baseline.pinned();
    let reference = risk_map(profiles, &pinned, settings, cfg)?;
    let baseline_top_two = reference.top_two();

    let outcomes: Vec<(usize, Vec<ParamValue>, Result<RiskMapping>)> = grid(specs)
        .into_par_iter()
        .enumerate()
        .map(|(i, values)| {
            let r = run_at(&values, profiles, &pinned, settings, cfg);
            (i, values, r)
        })
        .collect();

    let mut points = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (index, values, r) in outcomes {
        match r {
            Ok(map) => points.push(SweepPoint {
                index,
                values,
                top_two: map.top_two(),
                rows: map
                    .rows
                    .iter()
                    .map(|row| PointResult {
                        name: row.name.clone(),
                        gap: row.gap,
                        band: row.band,
                        converged: row.converged,
                    })
                    .collect(),
            }),
            Err(e) => failures.push(SweepFailure { index, message: e.to_string() }),
        }
    }

    let intervals = reference
        .rows
        .iter()
        .enumerate()
        .map(|(j, base)| {
            let gaps = points.iter().filter_map(|p| p.rows[j].gap);
            let (min, max) = gaps.fold((None, None), |(lo, hi): (Option<f64>, Option<f64>), g| {
                (Some(lo.map_or(g, |l| l.min(g))), Some(hi.map_or(g, |h| h.max(g))))
            });
            FirmInterval { name: base.name.clone(), baseline: base.gap, min, max }
        })
        .collect();
    let bands = reference
        .rows
        .iter()
        .enumerate()
        .map(|(j, base)| BandInvariance {
            name: base.name.clone(),
            baseline_band: base.band,
            invariant: points.iter().all(|p| p.rows[j].band == base.band),
        })
        .collect();
    let ranking_invariant = failures.is_empty() && points.iter().all(|p| p.top_two == baseline_top_two);

    let at_eta = |eta: f64| run_at(&[ParamValue { parameter: SweepParam::Eta, value: eta }], profiles, &pinned, settings, cfg);
    let (lo_map, hi_map) = (at_eta(eta_band.0)?, at_eta(eta_band.1)?);
    let eta_band = reference
        .rows
        .iter()
        .zip(lo_map.rows.iter().zip(&hi_map.rows))
        .map(|(base, (lo, hi))| EtaBand {
            name: base.name.clone(),
            eta_lo: eta_band.0,
            eta_hi: eta_band.1,
            gap_at_lo: lo.gap,
            gap_at_hi: hi.gap,
        })
        .collect();

    Ok(SweepReport {
        specs: specs.to_vec(),
        baseline_top_two,
        points,
        intervals,
        ranking_invariant,
        bands,
        eta_band,
        failures,
    })
}
