use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::model::{
    entry_probability_unchecked, stage2_fixed_point, upstream_profit, BaselineParams, MarginRule,
    QosProfile,
};

/// Upper bound on tier-adjusted effective quality.
pub const EFFECTIVE_QUALITY_CEILING: f64 = 1.5;

/// Share of the externality averted by the tier as a function of its policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PreventionCurve {
    /// `kappa * (1 - exp(-rate * tau))`.
    Saturating { rate: f64 },
    Constant { value: f64 },
}

impl Default for PreventionCurve {
    fn default() -> Self {
        PreventionCurve::Saturating { rate: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierPolicy {
    /// Capability premium of the gated tier.
    pub tau: f64,
    /// Fraction of rivals excluded from the tier.
    pub kappa: f64,
    #[serde(default)]
    pub prevention: PreventionCurve,
}

impl TierPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tier.tau", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid("tier.kappa", "must lie in [0, 1]"));
        }
        match self.prevention {
            PreventionCurve::Saturating { rate } if !(rate >= 0.0 && rate.is_finite()) => {
                Err(Error::invalid("tier.prevention.rate", "must be finite and >= 0"))
            }
            PreventionCurve::Constant { value } if !(0.0..=1.0).contains(&value) => {
                Err(Error::invalid("tier.prevention.value", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Number of rivals admitted to the tier out of `n`.
    pub fn partner_count(&self, n: usize) -> usize {
        (((1.0 - self.kappa) * n as f64).round() as usize).min(n)
    }

    pub fn prevention_share(&self) -> f64 {
        match self.prevention {
            PreventionCurve::Saturating { rate } => self.kappa * (1.0 - (-rate * self.tau).exp()),
            PreventionCurve::Constant { value } => value,
        }
    }

    fn open(&self) -> Self {
        Self { kappa: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveQualities {
    pub qos: QosProfile,
    pub partner_count: usize,
    /// Whether any effective quality hit the ceiling.
    pub clamped: bool,
}

/// Scales the provider and the first `partner_count` rivals by `1 + tau`.
pub fn tier_effective_qualities(qos: &QosProfile, policy: &TierPolicy) -> Result<EffectiveQualities> {
    policy.validate()?;
    let partners = policy.partner_count(qos.rivals.len());
    let mut clamped = false;
    let mut lift = |q: f64| {
        let v = q * (1.0 + policy.tau);
        if v > EFFECTIVE_QUALITY_CEILING {
            clamped = true;
            EFFECTIVE_QUALITY_CEILING
        } else {
            v
        }
    };
    let own = lift(qos.own);
    let rivals: Vec<f64> = qos
        .rivals
        .iter()
        .enumerate()
        .map(|(i, &q)| if i < partners { lift(q) } else { q })
        .collect();
    Ok(EffectiveQualities {
        qos: QosProfile::with_ceiling(own, rivals, EFFECTIVE_QUALITY_CEILING)?,
        partner_count: partners,
        clamped,
    })
}

/// A provider and its delivered QoS before any tier adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMarket {
    pub alpha: f64,
    pub qos: QosProfile,
    pub margin: MarginRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierGain {
    /// Provider profit under the policy minus profit with the tier open to all.
    pub gain: f64,
    pub profit_gated: f64,
    pub profit_open: f64,
    pub partner_count: usize,
    pub non_partner_count: usize,
    /// API revenue the provider still earns from non-partners.
    pub non_partner_api_revenue: f64,
    /// Non-partners exist and still pay for API access.
    pub in_gate: bool,
    pub clamped: bool,
}

pub fn tier_foreclosure_gain(
    market: &TierMarket,
    baseline: &BaselineParams,
    policy: &TierPolicy,
    cfg: &SolverConfig,
) -> Result<TierGain> {
    baseline.validate()?;
    let gated = tier_effective_qualities(&market.qos, policy)?;
    let open = tier_effective_qualities(&market.qos, &policy.open())?;
    let profit = |eff: &QosProfile| -> Result<f64> {
        let eq = stage2_fixed_point(market.alpha, eff, baseline, cfg)?;
        // API revenue and infrastructure cost follow delivered, not effective, QoS.
        Ok(upstream_profit(&market.qos, baseline, market.margin, &eq)?.total)
    };
    let profit_gated = profit(&gated.qos)?;
    let profit_open = profit(&open.qos)?;
    let non_partner_api_revenue = baseline.p_api
        * market.qos.rivals[gated.partner_count..]
            .iter()
            .map(|&q| entry_probability_unchecked(q, baseline))
            .sum::<f64>();
    let non_partner_count = market.qos.rivals.len() - gated.partner_count;
    Ok(TierGain {
        gain: profit_gated - profit_open,
        profit_gated,
        profit_open,
        partner_count: gated.partner_count,
        non_partner_count,
        non_partner_api_revenue,
        in_gate: non_partner_count > 0 && non_partner_api_revenue > 0.0,
        clamped: gated.clamped || open.clamped,
    })
}

/// Welfare net of the catastrophic externality, `W - E (1 - G)`, where the
/// tier only averts harm when it actually excludes someone.
pub fn safety_welfare(market_welfare: f64, externality: f64, policy: &TierPolicy) -> Result<f64> {
    policy.validate()?;
    if !(externality >= 0.0 && externality.is_finite()) {
        return Err(Error::invalid("externality", "must be finite and >= 0"));
    }
    let averted = if policy.kappa > 0.0 { policy.prevention_share() } else { 0.0 };
    Ok(market_welfare - externality * (1.0 - averted))
}
