use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::model::{stage2_fixed_point, BaselineParams, QosProfile};
use crate::roots::{brent, ScalarOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicScenario {
    pub sunk_entry_cost: f64,
    pub switching_cost: f64,
    #[serde(default = "default_discount")]
    pub discount_factor: f64,
    pub rival_outside_profit: f64,
}

fn default_discount() -> f64 {
    0.95
}

impl DynamicScenario {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sunk_entry_cost", self.sunk_entry_cost),
            ("switching_cost", self.switching_cost),
            ("rival_outside_profit", self.rival_outside_profit),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("dynamic.{name}"), "must be finite and >= 0"));
            }
        }
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return Err(Error::invalid("dynamic.discount_factor", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Profit level that leaves a locked-in rival indifferent to leaving.
    pub fn indifference_level(&self) -> f64 {
        self.rival_outside_profit - self.switching_cost
    }
}

/// Market structure for the two-period game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicMarket {
    pub alpha: f64,
    pub n_rivals: usize,
}

/// Period-1 QoS: the non-discriminatory benchmark, common to all firms.
pub fn period1_qos(baseline: &BaselineParams) -> f64 {
    baseline.reference_qos().min(1.0)
}

/// Per-period profit of a representative rival when all rivals receive
/// `q_rival` and the provider's app runs at `q_own`.
pub fn rival_profit(
    market: &DynamicMarket,
    q_own: f64,
    q_rival: f64,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<f64> {
    let qos = QosProfile::symmetric(q_own, q_rival, market.n_rivals)?;
    let eq = stage2_fixed_point(market.alpha, &qos, baseline, cfg)?;
    if !eq.converged {
        return Err(Error::NotConverged("stage-2 equilibrium"));
    }
    Ok((eq.prices[1] - baseline.c_d) * eq.shares[1]
        - 0.5 * baseline.k * eq.efforts[1] * eq.efforts[1]
        - baseline.p_api)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationStatus {
    /// Rival profit equals the indifference level at the returned QoS.
    Indifferent,
    /// Even zero QoS keeps the rival above indifference.
    Slack,
    /// The rival is below indifference at full Period-1 QoS.
    ImmediateExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Period2Outcome {
    pub q_period1: f64,
    pub q_period2: f64,
    pub status: DegradationStatus,
    pub rival_profit_period1: f64,
    pub rival_profit_period2: f64,
    pub indifference_level: f64,
}

/// Lowest rival QoS on `[0, q1]` that keeps locked-in rivals from switching.
pub fn period2_degradation(
    scenario: &DynamicScenario,
    market: &DynamicMarket,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<Period2Outcome> {
    scenario.validate()?;
    let q1 = period1_qos(baseline);
    let target = scenario.indifference_level();
    let profit = |q: f64| rival_profit(market, q1, q, baseline, cfg);
    let pi1 = profit(q1)?;
    let outcome = |q2: f64, pi2: f64, status| Period2Outcome {
        q_period1: q1,
        q_period2: q2,
        status,
        rival_profit_period1: pi1,
        rival_profit_period2: pi2,
        indifference_level: target,
    };
    if pi1 < target {
        return Ok(outcome(q1, pi1, DegradationStatus::ImmediateExit));
    }
    let pi0 = profit(0.0)?;
    if pi0 >= target {
        return Ok(outcome(0.0, pi0, DegradationStatus::Slack));
    }
    let mut failure = None;
    let root = brent(
        |q| match profit(q) {
            Ok(v) => v - target,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        q1,
        ScalarOptions { xtol: 1e-14, max_iter: 500 },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let pi2 = profit(root.root)?;
    Ok(outcome(root.root, pi2, DegradationStatus::Indifferent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub period1_surplus: f64,
    pub continuation: f64,
    pub total: f64,
    pub enters: bool,
    pub benchmark_continuation: f64,
    pub benchmark_total: f64,
    pub benchmark_enters: bool,
    /// Entry would occur without Period-2 degradation but does not with it.
    pub efficient_entry_deterred: bool,
    pub period2: Period2Outcome,
}

pub fn entry_deterrence_check(
    scenario: &DynamicScenario,
    market: &DynamicMarket,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<EntryCheck> {
    let p2 = period2_degradation(scenario, market, baseline, cfg)?;
    Ok(entry_accounting(scenario, p2))
}

/// Entry arithmetic from already computed Period-1/Period-2 profits.
pub fn entry_accounting(scenario: &DynamicScenario, p2: Period2Outcome) -> EntryCheck {
    let d = scenario.discount_factor;
    let exit_value = scenario.indifference_level();
    let period1_surplus = p2.rival_profit_period1 - scenario.sunk_entry_cost;
    let continuation = p2.rival_profit_period2.max(exit_value);
    let benchmark_continuation = p2.rival_profit_period1.max(exit_value);
    let total = period1_surplus + d * continuation;
    let benchmark_total = period1_surplus + d * benchmark_continuation;
    let enters = total >= 0.0;
    let benchmark_enters = benchmark_total >= 0.0;
    EntryCheck {
        period1_surplus,
        continuation,
        total,
        enters,
        benchmark_continuation,
        benchmark_total,
        benchmark_enters,
        efficient_entry_deterred: benchmark_enters && !enters,
        period2: p2,
    }
}
