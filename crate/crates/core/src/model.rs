//! Downstream logit equilibrium and the upstream profit primitives.

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};

/// Structural parameters common to every firm in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    /// Curvature of the quadratic infrastructure cost.
    pub gamma: f64,
    /// Elasticity of rival entry with respect to delivered QoS.
    pub eta: f64,
    /// Per-rival API price, in quality units.
    pub p_api: f64,
    /// Curvature of the downstream effort cost.
    pub k: f64,
    /// Weight on the economies-of-scope kink.
    pub phi: f64,
    /// Entry probability at the reference QoS.
    pub rho0: f64,
    /// Downstream marginal cost.
    pub c_d: f64,
    /// Reference QoS of the entry function. Derived from the benchmark when
    /// absent; pinned when a caller perturbs parameters around a scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_ref: Option<f64>,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            eta: 0.5,
            p_api: 0.15,
            k: 1.0,
            phi: 0.0,
            rho0: 0.5,
            c_d: 0.0,
            q_ref: None,
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("p_api", self.p_api),
            ("k", self.k),
            ("phi", self.phi),
            ("rho0", self.rho0),
            ("c_d", self.c_d),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(format!("baseline.{name}"), "must be finite"));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("baseline.gamma", "must be > 0"));
        }
        if self.k <= 0.0 {
            return Err(Error::invalid("baseline.k", "must be > 0"));
        }
        if self.eta <= 0.0 {
            return Err(Error::invalid("baseline.eta", "must be > 0"));
        }
        if self.phi < 0.0 {
            return Err(Error::invalid("baseline.phi", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.rho0) {
            return Err(Error::invalid("baseline.rho0", "must lie in [0, 1]"));
        }
        if self.p_api < 0.0 {
            return Err(Error::invalid("baseline.p_api", "must be >= 0"));
        }
        if let Some(q) = self.q_ref {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::invalid("baseline.q_ref", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Copy with the entry reference point frozen at its current value.
    pub fn pinned(&self) -> Self {
        Self {
            q_ref: Some(self.reference_qos()),
            ..self.clone()
        }
    }

    /// Rival QoS of the non-discriminatory symmetric benchmark: the root of
    /// `gamma q^2 = p rho0 eta`. Falls back to 1 when the API motive is absent.
    pub fn reference_qos(&self) -> f64 {
        if let Some(q) = self.q_ref {
            return q;
        }
        let c = self.p_api * self.rho0 * self.eta;
        if c > 0.0 {
            (c / self.gamma).sqrt()
        } else {
            1.0
        }
    }
}

/// How the provider values a unit of its own downstream share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginRule {
    /// The Stage-2 logit markup `p_U - c_d`.
    StageTwoMarkup,
    /// A fixed margin in utility units.
    Exogenous(f64),
}

impl MarginRule {
    pub fn margin(&self, eq: &Stage2Equilibrium, c_d: f64) -> f64 {
        match *self {
            MarginRule::StageTwoMarkup => eq.prices[0] - c_d,
            MarginRule::Exogenous(m) => m,
        }
    }
}

/// Delivered inference quality: `own` for the provider's app, `rivals` for
/// the API customers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosProfile {
    pub own: f64,
    pub rivals: Vec<f64>,
}

impl QosProfile {
    pub fn new(own: f64, rivals: Vec<f64>) -> Result<Self> {
        Self::with_ceiling(own, rivals, 1.0)
    }

    /// Like [`QosProfile::new`] but admits values up to `ceiling`, as needed
    /// for tier-adjusted effective qualities.
    pub fn with_ceiling(own: f64, rivals: Vec<f64>, ceiling: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && (0.0..=ceiling).contains(&v);
        if !ok(own) {
            return Err(Error::invalid("qos.own", format!("{own} outside [0, {ceiling}]")));
        }
        if let Some((i, v)) = rivals.iter().enumerate().find(|(_, &v)| !ok(v)) {
            return Err(Error::invalid(
                format!("qos.rivals[{i}]"),
                format!("{v} outside [0, {ceiling}]"),
            ));
        }
        Ok(Self { own, rivals })
    }

    /// Own QoS together with `n` identical rival values.
    pub fn symmetric(own: f64, rival: f64, n: usize) -> Result<Self> {
        Self::new(own, vec![rival; n])
    }

    pub fn n_firms(&self) -> usize {
        self.rivals.len() + 1
    }

    pub fn max_rival(&self) -> f64 {
        self.rivals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        std::iter::once(self.own).chain(self.rivals.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitShares {
    pub inside: Vec<f64>,
    pub outside: f64,
}

/// Logit shares with an outside option of utility zero.
pub fn logit_shares(qualities: &[f64], prices: &[f64]) -> Result<LogitShares> {
    if qualities.is_empty() || qualities.len() != prices.len() {
        return Err(Error::domain(format!(
            "logit_shares needs equal non-empty vectors, got {} and {}",
            qualities.len(),
            prices.len()
        )));
    }
    let utils: Vec<f64> = qualities.iter().zip(prices).map(|(q, p)| q - p).collect();
    if utils.iter().any(|u| !u.is_finite()) {
        return Err(Error::domain("logit_shares received a non-finite utility"));
    }
    let shift = utils.iter().copied().fold(0.0_f64, f64::max);
    let weights: Vec<f64> = utils.iter().map(|u| (u - shift).exp()).collect();
    let outside_w = (-shift).exp();
    let denom = outside_w + weights.iter().sum::<f64>();
    Ok(LogitShares {
        inside: weights.iter().map(|w| w / denom).collect(),
        outside: outside_w / denom,
    })
}

/// Downstream equilibrium for the provider (index 0) and its rivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Equilibrium {
    pub shares: Vec<f64>,
    pub outside_share: f64,
    pub prices: Vec<f64>,
    pub efforts: Vec<f64>,
    pub qualities: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the share ceiling bound at any iterate.
    pub ceiling_active: bool,
}

impl Stage2Equilibrium {
    pub fn own_share(&self) -> f64 {
        self.shares[0]
    }

    /// Mean rival share; equals each rival's share under symmetric inputs.
    pub fn rival_share(&self) -> f64 {
        let r = &self.shares[1..];
        if r.is_empty() {
            0.0
        } else {
            r.iter().sum::<f64>() / r.len() as f64
        }
    }
}

pub fn optimal_effort(alpha: f64, markup: f64, share: f64, k: f64, cap: f64) -> f64 {
    ((1.0 - alpha) / k * markup * share * (1.0 - share)).clamp(0.0, cap)
}

/// Joint fixed point of logit shares, markups `c_d + 1/(1-s)` and effort
/// best responses, by damped successive substitution on the share vector.
///
/// A run that exhausts `max_iter` returns the last iterate with
/// `converged == false`.
pub fn stage2_fixed_point(
    alpha: f64,
    qos: &QosProfile,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<Stage2Equilibrium> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} outside (0, 1]")));
    }
    cfg.validate()?;
    let q = qos.to_vec();
    let n = q.len();
    let k = baseline.k;
    let c_d = baseline.c_d;

    let mut s = vec![1.0 / (n as f64 + 1.0); n];
    let mut prices = vec![0.0; n];
    let mut quals = vec![0.0; n];
    let mut converged = false;
    let mut ceiling_active = false;
    let mut iterations = 0;

    let fill = |s: &[f64], prices: &mut [f64], quals: &mut [f64]| {
        for i in 0..n {
            let markup = 1.0 / (1.0 - s[i]);
            prices[i] = c_d + markup;
            let e = optimal_effort(alpha, markup, s[i], k, cfg.effort_cap);
            quals[i] = alpha * q[i] + (1.0 - alpha) * e;
        }
    };

    let mut target = LogitShares {
        inside: s.clone(),
        outside: 0.0,
    };
    for it in 1..=cfg.max_iter {
        iterations = it;
        fill(&s, &mut prices, &mut quals);
        target = logit_shares(&quals, &prices)?;
        let mut change = 0.0_f64;
        for i in 0..n {
            let mut t = target.inside[i];
            if t > cfg.share_ceiling {
                t = cfg.share_ceiling;
                ceiling_active = true;
            }
            let next = cfg.damping * t + (1.0 - cfg.damping) * s[i];
            change = change.max((next - s[i]).abs());
            s[i] = next;
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    // Report the logit image of the final iterate so shares sum to one, then
    // rebuild prices, efforts and qualities from those shares.
    fill(&s, &mut prices, &mut quals);
    target = logit_shares(&quals, &prices).unwrap_or(target);
    let shares: Vec<f64> = target
        .inside
        .iter()
        .map(|&t| {
            if t > cfg.share_ceiling {
                ceiling_active = true;
                cfg.share_ceiling
            } else {
                t
            }
        })
        .collect();
    let mut efforts = vec![0.0; n];
    for i in 0..n {
        let markup = 1.0 / (1.0 - shares[i]);
        prices[i] = c_d + markup;
        efforts[i] = optimal_effort(alpha, markup, shares[i], k, cfg.effort_cap);
        quals[i] = alpha * q[i] + (1.0 - alpha) * efforts[i];
    }

    Ok(Stage2Equilibrium {
        shares,
        outside_share: target.outside,
        prices,
        efforts,
        qualities: quals,
        converged,
        iterations,
        ceiling_active,
    })
}

/// Constant-elasticity entry probability `min(1, rho0 (q/q_ref)^eta)`.
pub fn entry_probability(q: f64, baseline: &BaselineParams) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::domain(format!("entry probability needs q > 0, got {q}")));
    }
    Ok(entry_probability_unchecked(q, baseline))
}

pub(crate) fn entry_probability_unchecked(q: f64, baseline: &BaselineParams) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    (baseline.rho0 * (q / baseline.reference_qos()).powf(baseline.eta)).min(1.0)
}

/// Elasticity of entry at `q`: `eta` on the uncapped branch, zero once capped.
pub fn local_entry_elasticity(q: f64, baseline: &BaselineParams) -> f64 {
    if q <= 0.0 {
        return baseline.eta;
    }
    let raw = baseline.rho0 * (q / baseline.reference_qos()).powf(baseline.eta);
    if raw >= 1.0 {
        0.0
    } else {
        baseline.eta
    }
}

/// Quadratic infrastructure cost plus the economies-of-scope kink.
pub fn infra_cost(qos: &QosProfile, baseline: &BaselineParams) -> f64 {
    let sq: f64 = qos.own * qos.own + qos.rivals.iter().map(|q| q * q).sum::<f64>();
    let q_max = qos.max_rival();
    let kink = if q_max.is_finite() && qos.own < q_max {
        baseline.phi * (q_max - qos.own)
    } else {
        0.0
    };
    0.5 * baseline.gamma * sq + kink
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpstreamProfit {
    /// Own downstream profit net of own effort cost.
    pub downstream: f64,
    pub api: f64,
    pub infra_cost: f64,
    pub total: f64,
}

/// Provider profit at a Stage-2 equilibrium. Rivals at zero QoS do not enter.
pub fn upstream_profit(
    qos: &QosProfile,
    baseline: &BaselineParams,
    margin: MarginRule,
    eq: &Stage2Equilibrium,
) -> Result<UpstreamProfit> {
    if !eq.converged {
        return Err(Error::NotConverged("stage-2 equilibrium"));
    }
    if eq.shares.len() != qos.n_firms() {
        return Err(Error::domain("equilibrium and QoS profile disagree on firm count"));
    }
    Ok(profit_components(qos, baseline, margin, eq))
}

pub(crate) fn profit_components(
    qos: &QosProfile,
    baseline: &BaselineParams,
    margin: MarginRule,
    eq: &Stage2Equilibrium,
) -> UpstreamProfit {
    let m = margin.margin(eq, baseline.c_d);
    let downstream = m * eq.shares[0] - 0.5 * baseline.k * eq.efforts[0] * eq.efforts[0];
    let api = baseline.p_api
        * qos
            .rivals
            .iter()
            .map(|&q| entry_probability_unchecked(q, baseline))
            .sum::<f64>();
    let infra = infra_cost(qos, baseline);
    UpstreamProfit {
        downstream,
        api,
        infra_cost: infra,
        total: downstream + api - infra,
    }
}

/// Convenience: solve Stage 2 at `qos` and evaluate provider profit.
pub fn profit_at(
    alpha: f64,
    qos: &QosProfile,
    baseline: &BaselineParams,
    margin: MarginRule,
    cfg: &SolverConfig,
) -> Result<(UpstreamProfit, Stage2Equilibrium)> {
    let eq = stage2_fixed_point(alpha, qos, baseline, cfg)?;
    let profit = upstream_profit(qos, baseline, margin, &eq)?;
    Ok((profit, eq))
}
