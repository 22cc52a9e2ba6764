use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profiles::{FirmProfile, Treatment};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::foreclosure::{stage1_joint_equilibrium, Regime, Stage1Problem, Stage1Solution};
use crate::model::{BaselineParams, MarginRule};
use crate::roots::{brent, ScalarOptions};
use crate::welfare::DesignationInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelThresholds {
    /// Gaps above this fall in the top band.
    pub high: f64,
    /// Gaps below this are labelled low.
    pub low: f64,
    /// Tier products above this fall in the tier-gated band.
    pub tier: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self { high: 0.15, low: 0.05, tier: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSettings {
    /// Shared reconciliation scale; effective margin is `scale * lambda * m_U`.
    pub margin_scale: f64,
    pub thresholds: LabelThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskBand {
    Highest,
    Elevated,
    Monitor,
    Low,
    TierGated,
    StructuralConstrained,
    Unassessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub name: String,
    pub display_name: String,
    pub submarket: String,
    pub treatment: Treatment,
    pub as_of: String,
    pub alpha: f64,
    pub lambda: f64,
    pub switching_cost: Option<f64>,
    pub effective_margin: Option<f64>,
    pub n_rivals: Option<usize>,
    pub gap: Option<f64>,
    pub q_own: Option<f64>,
    pub q_rival: Option<f64>,
    pub bracket: Option<f64>,
    pub discriminates: Option<bool>,
    pub regime: Option<Regime>,
    pub converged: Option<bool>,
    /// Table cell for the gap: a number, `watch`, or `---`.
    pub gap_cell: String,
    pub tau: Option<f64>,
    pub kappa: Option<f64>,
    pub tau_kappa: Option<f64>,
    pub tau_kappa_low: Option<f64>,
    pub tau_kappa_high: Option<f64>,
    pub realized_bias_low: Option<f64>,
    pub realized_bias_high: Option<f64>,
    pub band: RiskBand,
    pub label: String,
    /// Solver trouble on this row; the row is kept.
    pub flagged: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMapping {
    pub as_of: Vec<String>,
    pub margin_scale: f64,
    pub thresholds: LabelThresholds,
    pub rows: Vec<RiskRow>,
}

impl RiskMapping {
    pub fn row(&self, name: &str) -> Option<&RiskRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Names of the two largest numeric gaps, largest first.
    pub fn top_two(&self) -> Vec<String> {
        let mut ranked: Vec<(&str, f64)> = self
            .rows
            .iter()
            .filter(|r| r.converged == Some(true))
            .filter_map(|r| r.gap.map(|g| (r.name.as_str(), g)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.into_iter().take(2).map(|(n, _)| n.to_string()).collect()
    }
}

/// Stage-1 problem for a profile under the shared margin scale.
pub fn profile_problem(profile: &FirmProfile, margin_scale: f64) -> Result<Stage1Problem> {
    let m = profile
        .margin
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{}.margin", profile.name), "missing"))?;
    let n = profile
        .n_rivals
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{}.n_rivals", profile.name), "missing"))?;
    Ok(Stage1Problem {
        alpha: profile.alpha.value,
        n_rivals: n.value,
        margin: MarginRule::Exogenous(margin_scale * profile.lambda.value * m.value),
    })
}

pub fn solve_profile(
    profile: &FirmProfile,
    baseline: &BaselineParams,
    margin_scale: f64,
    cfg: &SolverConfig,
) -> Result<Stage1Solution> {
    stage1_joint_equilibrium(&profile_problem(profile, margin_scale)?, baseline, cfg)
}

fn blank_row(p: &FirmProfile) -> RiskRow {
    let tau = p.tau.as_ref().map(|t| t.value);
    let kappa = p.kappa.as_ref().map(|k| k.value);
    let product = tau.zip(kappa).map(|(t, k)| t * k);
    let range = p.tau_range.as_ref().map(|r| r.value);
    RiskRow {
        name: p.name.clone(),
        display_name: p.display_name.clone(),
        submarket: p.submarket.clone(),
        treatment: p.treatment,
        as_of: p.as_of.clone(),
        alpha: p.alpha.value,
        lambda: p.lambda.value,
        switching_cost: p.switching_cost.as_ref().map(|s| s.value),
        effective_margin: None,
        n_rivals: p.n_rivals.as_ref().map(|n| n.value),
        gap: None,
        q_own: None,
        q_rival: None,
        bracket: None,
        discriminates: None,
        regime: None,
        converged: None,
        gap_cell: "---".into(),
        tau,
        kappa,
        tau_kappa: product,
        tau_kappa_low: range.zip(kappa).map(|(r, k)| r[0] * k).or(product),
        tau_kappa_high: range.zip(kappa).map(|(r, k)| r[1] * k).or(product),
        realized_bias_low: p.realized_routing_bias.as_ref().map(|r| r.value[0]),
        realized_bias_high: p.realized_routing_bias.as_ref().map(|r| r.value[1]),
        band: RiskBand::Unassessed,
        label: String::new(),
        flagged: false,
        note: String::new(),
    }
}

fn solved_row(p: &FirmProfile, baseline: &BaselineParams, scale: f64, cfg: &SolverConfig) -> RiskRow {
    let mut row = blank_row(p);
    let problem = match profile_problem(p, scale) {
        Ok(pr) => pr,
        Err(e) => {
            row.flagged = true;
            row.note = e.to_string();
            return row;
        }
    };
    if let MarginRule::Exogenous(m) = problem.margin {
        row.effective_margin = Some(m);
    }
    match stage1_joint_equilibrium(&problem, baseline, cfg) {
        Ok(sol) => {
            row.gap = Some(sol.gap);
            row.q_own = Some(sol.q_own_star);
            row.q_rival = Some(sol.q_rival_star);
            row.bracket = Some(sol.bracket_value);
            row.discriminates = Some(sol.discriminates);
            row.regime = Some(sol.regime);
            row.converged = Some(sol.converged);
            row.gap_cell = format!("{:.4}", sol.gap);
            if !sol.converged {
                row.flagged = true;
                row.note = format!("stage-1 did not converge after {} iterations", sol.iterations);
            }
        }
        Err(e) => {
            row.flagged = true;
            row.converged = Some(false);
            row.note = e.to_string();
        }
    }
    row
}

/// Comparative risk map: one row per profile, in input order.
pub fn risk_map(
    profiles: &[FirmProfile],
    baseline: &BaselineParams,
    settings: &RiskSettings,
    cfg: &SolverConfig,
) -> Result<RiskMapping> {
    if !(settings.margin_scale > 0.0 && settings.margin_scale.is_finite()) {
        return Err(Error::invalid("margin_scale", "must be finite and > 0"));
    }
    let th = settings.thresholds;
    if !(th.low <= th.high) {
        return Err(Error::invalid("thresholds", "low must not exceed high"));
    }
    baseline.validate()?;
    cfg.validate()?;
    let mut rows: Vec<RiskRow> = profiles
        .par_iter()
        .map(|p| match p.treatment {
            Treatment::GapSolve | Treatment::Watch => solved_row(p, baseline, settings.margin_scale, cfg),
            Treatment::TierGated | Treatment::StructuralOnly => blank_row(p),
        })
        .collect();

    let top = rows
        .iter()
        .filter(|r| r.treatment == Treatment::GapSolve)
        .filter_map(|r| r.gap.map(|g| (g, r.display_name.clone())))
        .filter(|(g, _)| *g > th.high)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    for (row, p) in rows.iter_mut().zip(profiles) {
        let (band, label) = match row.treatment {
            Treatment::GapSolve => match row.gap {
                None => (RiskBand::Unassessed, "Not assessed".to_string()),
                Some(g) if g > th.high => match &top {
                    Some((tg, _)) if g >= *tg => (RiskBand::Highest, "Highest in sample".to_string()),
                    Some((_, name)) => (RiskBand::Elevated, format!("Elevated (overlaps {name})")),
                    None => (RiskBand::Highest, "Highest in sample".to_string()),
                },
                Some(g) if g >= th.low => (RiskBand::Monitor, "Elevated; monitor".to_string()),
                Some(_) => (RiskBand::Low, "Low".to_string()),
            },
            Treatment::Watch => {
                row.gap_cell = "watch".into();
                (RiskBand::Monitor, "Elevated; monitor".to_string())
            }
            Treatment::TierGated => match row.tau_kappa {
                Some(tk) if tk > th.tier => {
                    let met = p.pillar4.as_ref().is_some_and(|f| f.value.all());
                    let label = if met {
                        "Tier-gated; safety carve-out conditions met"
                    } else {
                        "Tier-gated; safety carve-out conditions not met"
                    };
                    (RiskBand::TierGated, label.to_string())
                }
                Some(_) => (RiskBand::Low, "Low".to_string()),
                None => (RiskBand::Unassessed, "Not assessed".to_string()),
            },
            Treatment::StructuralOnly => match row.realized_bias_high {
                Some(hi) if hi < row.lambda && row.lambda > 0.5 => (
                    RiskBand::StructuralConstrained,
                    "High structural, constrained realized".to_string(),
                ),
                _ if row.lambda > 0.5 => (RiskBand::Monitor, "High structural".to_string()),
                _ => (RiskBand::Low, "Low".to_string()),
            },
        };
        row.band = band;
        row.label = label;
    }
    let mut as_of: Vec<String> = rows.iter().map(|r| r.as_of.clone()).collect();
    as_of.sort();
    as_of.dedup();
    Ok(RiskMapping {
        as_of,
        margin_scale: settings.margin_scale,
        thresholds: th,
        rows,
    })
}

/// Designation input for a profile, using the measured gap from its risk row.
/// Watch rows count as pending observation.
pub fn designation_input(profile: &FirmProfile, row: Option<&RiskRow>) -> DesignationInput {
    let measured_gap = match profile.treatment {
        Treatment::GapSolve => row.and_then(|r| r.gap),
        _ => None,
    };
    let tier = matches!(profile.treatment, Treatment::TierGated);
    DesignationInput {
        name: profile.name.clone(),
        alpha: profile.alpha.value,
        lambda: profile.lambda.value,
        switching_cost: profile.switching_cost.as_ref().map_or(0.0, |s| s.value),
        tau: if tier { profile.tau.as_ref().map(|t| t.value) } else { None },
        kappa: if tier { profile.kappa.as_ref().map(|k| k.value) } else { None },
        measured_gap,
        pillar4: profile.pillar4.as_ref().map(|f| f.value),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginFit {
    pub firm: String,
    pub target_gap: f64,
    pub margin_scale: f64,
    pub fitted_gap: f64,
    pub iterations: usize,
}

/// Margin scale at which `profile`'s equilibrium gap equals `target_gap`.
pub fn fit_margin_scale(
    profile: &FirmProfile,
    baseline: &BaselineParams,
    target_gap: f64,
    bracket: (f64, f64),
    cfg: &SolverConfig,
) -> Result<MarginFit> {
    let mut failure = None;
    let root = brent(
        |s| match solve_profile(profile, baseline, s, cfg) {
            Ok(sol) if sol.converged => sol.gap - target_gap,
            Ok(_) => {
                failure.get_or_insert(Error::NotConverged("stage-1 equilibrium"));
                f64::NAN
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        bracket.0,
        bracket.1,
        ScalarOptions { xtol: 1e-12, max_iter: 200 },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let root = root?;
    let sol = solve_profile(profile, baseline, root.root, cfg)?;
    Ok(MarginFit {
        firm: profile.name.clone(),
        target_gap,
        margin_scale: root.root,
        fitted_gap: sol.gap,
        iterations: root.iterations,
    })
}
