use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::scan_then_golden;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    /// Route shares, provider's own tool first.
    pub shares: Vec<f64>,
    pub theta: f64,
    pub bias: f64,
}

/// Softmax routing over `theta * Q_i` with an additive bias on the
/// provider's own tool (index 0).
pub fn route(qualities: &[f64], theta: f64, bias: f64) -> Result<RoutingOutcome> {
    if qualities.is_empty() {
        return Err(Error::domain("routing needs at least one tool"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", "must be finite and > 0"));
    }
    if !(bias >= 0.0 && bias.is_finite()) {
        return Err(Error::invalid("bias", "must be finite and >= 0"));
    }
    if qualities.iter().any(|q| !q.is_finite()) {
        return Err(Error::domain("non-finite quality"));
    }
    let scores: Vec<f64> = qualities
        .iter()
        .enumerate()
        .map(|(i, q)| theta * q + if i == 0 { bias } else { 0.0 })
        .collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(RoutingOutcome {
        shares: w.iter().map(|x| x / total).collect(),
        theta,
        bias,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingProblem {
    /// Tool qualities, provider's own tool first.
    pub qualities: Vec<f64>,
    pub theta: f64,
    /// Provider margin on a request routed to its own tool.
    pub own_margin: f64,
    /// API revenue on a request routed to a rival tool.
    pub api_price: f64,
    /// Weight of the convex observability penalty `c_obs * bias^2`.
    pub observability_cost: f64,
    #[serde(default = "default_bias_max")]
    pub bias_max: f64,
}

fn default_bias_max() -> f64 {
    20.0
}

impl RoutingProblem {
    pub fn objective(&self, bias: f64) -> Result<f64> {
        let r = route(&self.qualities, self.theta, bias)?;
        let own = r.shares[0];
        Ok(own * self.own_margin + (1.0 - own) * self.api_price
            - self.observability_cost * bias * bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingBias {
    pub bias: f64,
    pub objective: f64,
    /// Objective constant in the bias; zero is returned.
    pub flat: bool,
    pub at_upper_bound: bool,
    pub outcome: RoutingOutcome,
}

pub fn optimal_routing_bias(problem: &RoutingProblem) -> Result<RoutingBias> {
    if !(problem.observability_cost >= 0.0) {
        return Err(Error::invalid("observability_cost", "must be >= 0"));
    }
    if !(problem.bias_max > 0.0 && problem.bias_max.is_finite()) {
        return Err(Error::invalid("bias_max", "must be finite and > 0"));
    }
    let base = problem.objective(0.0)?;
    let f = |b: f64| problem.objective(b).unwrap_or(f64::NEG_INFINITY);
    let best = scan_then_golden(f, 0.0, problem.bias_max, 2001, 1e-10);
    let spread = (0..=200)
        .map(|i| f(problem.bias_max * i as f64 / 200.0))
        .fold(0.0_f64, |m, v| m.max((v - base).abs()));
    let flat = spread <= 1e-14 * base.abs().max(1.0);
    let bias = if flat || best.value <= base { 0.0 } else { best.argmax };
    Ok(RoutingBias {
        bias,
        objective: problem.objective(bias)?,
        flat,
        at_upper_bound: bias >= problem.bias_max,
        outcome: route(&problem.qualities, problem.theta, bias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbiased_equal_quality_is_uniform() {
        let r = route(&[0.4, 0.4, 0.4, 0.4], 2.0, 0.0).unwrap();
        for s in r.shares {
            assert!((s - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_bias_scales_odds_by_e() {
        let r = route(&[0.5, 0.5], 1.0, 1.0).unwrap();
        assert!((r.shares[0] / r.shares[1] - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn large_bias_routes_everything_home() {
        let r = route(&[0.1, 0.9, 0.9], 1.0, 60.0).unwrap();
        assert!(r.shares[0] > 1.0 - 1e-15);
        assert!((r.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indifferent_margin_without_penalty_is_flat() {
        let p = RoutingProblem {
            qualities: vec![0.5, 0.6],
            theta: 1.0,
            own_margin: 0.15,
            api_price: 0.15,
            observability_cost: 0.0,
            bias_max: 20.0,
        };
        let b = optimal_routing_bias(&p).unwrap();
        assert!(b.flat);
        assert_eq!(b.bias, 0.0);
    }
}
