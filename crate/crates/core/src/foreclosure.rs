//! Stage-1 QoS choice by the integrated provider.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::model::{
    entry_probability_unchecked, local_entry_elasticity, profit_components, stage2_fixed_point,
    BaselineParams, MarginRule, QosProfile, Stage2Equilibrium, UpstreamProfit,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

/// Own-app QoS from the first-order condition, clamped to `[0, 1]`.
pub fn optimal_q_own(alpha: f64, margin: f64, s_own: f64, gamma: f64) -> Result<Clamped> {
    if !(0.0..=1.0).contains(&s_own) {
        return Err(Error::domain(format!("own share {s_own} outside [0, 1]")));
    }
    if !(gamma > 0.0) || !(alpha >= 0.0) || !(margin >= 0.0) {
        return Err(Error::domain("optimal_q_own needs alpha, margin >= 0 and gamma > 0"));
    }
    let raw = alpha * margin * s_own * (1.0 - s_own) / gamma;
    Ok(Clamped {
        value: raw.clamp(0.0, 1.0),
        clamped: raw > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RivalQos {
    pub value: f64,
    /// No API revenue motive: the root collapses to zero.
    pub degenerate: bool,
    pub clamped: bool,
}

/// Positive root of `gamma q^2 + linear q - api_slope = 0`, in the
/// cancellation-free form `2c / (b + sqrt(b^2 + 4 gamma c))`.
pub fn rival_qos_root(linear: f64, api_slope: f64, gamma: f64) -> RivalQos {
    if api_slope <= 0.0 {
        return RivalQos {
            value: 0.0,
            degenerate: true,
            clamped: false,
        };
    }
    let root = 2.0 * api_slope / (linear + (linear * linear + 4.0 * gamma * api_slope).sqrt());
    RivalQos {
        value: root.min(1.0),
        degenerate: false,
        clamped: root > 1.0,
    }
}

/// Rival QoS from the first-order condition with entry evaluated at the
/// reference point (`rho = rho0`).
pub fn optimal_q_rival(
    alpha: f64,
    margin: f64,
    s_own: f64,
    s_rival: f64,
    baseline: &BaselineParams,
) -> Result<RivalQos> {
    optimal_q_rival_at(alpha, margin, s_own, s_rival, baseline.rho0, baseline)
}

/// As [`optimal_q_rival`] with an explicit entry probability.
pub fn optimal_q_rival_at(
    alpha: f64,
    margin: f64,
    s_own: f64,
    s_rival: f64,
    rho: f64,
    baseline: &BaselineParams,
) -> Result<RivalQos> {
    if !(0.0..=1.0).contains(&s_own) || !(0.0..=1.0).contains(&s_rival) {
        return Err(Error::domain("shares must lie in [0, 1]"));
    }
    baseline.validate()?;
    let linear = alpha * margin * s_own * s_rival;
    Ok(rival_qos_root(
        linear,
        baseline.p_api * rho * baseline.eta,
        baseline.gamma,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenShares {
    pub own: f64,
    pub rival: f64,
}

/// Gap evaluated at given (not equilibrium) shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEvaluation {
    pub q_own: f64,
    pub q_rival: f64,
    pub gap: f64,
    /// `alpha m s_U [(1 - s_U) + s] - p rho eta / q_i`.
    pub bracket: f64,
    pub discriminates: bool,
    pub own_clamped: bool,
    pub rival_clamped: bool,
    pub rival_degenerate: bool,
}

fn evaluate_gap(
    alpha: f64,
    margin: f64,
    gamma: f64,
    shares: FrozenShares,
    api_slope: f64,
) -> Result<GapEvaluation> {
    let own = optimal_q_own(alpha, margin, shares.own, gamma)?;
    let rival = rival_qos_root(alpha * margin * shares.own * shares.rival, api_slope, gamma);
    let api_term = if rival.degenerate {
        0.0
    } else {
        api_slope / rival.value
    };
    let bracket = alpha * margin * shares.own * ((1.0 - shares.own) + shares.rival) - api_term;
    Ok(GapEvaluation {
        q_own: own.value,
        q_rival: rival.value,
        gap: own.value - rival.value,
        bracket,
        discriminates: bracket > 0.0,
        own_clamped: own.clamped,
        rival_clamped: rival.clamped,
        rival_degenerate: rival.degenerate,
    })
}

/// QoS gap at frozen shares with entry at the reference point.
pub fn qos_gap(
    alpha: f64,
    margin: f64,
    baseline: &BaselineParams,
    shares: FrozenShares,
) -> Result<GapEvaluation> {
    baseline.validate()?;
    if !(shares.own > 0.0 && shares.own < 1.0 && shares.rival > 0.0 && shares.rival < 1.0) {
        return Err(Error::domain("qos_gap needs interior shares"));
    }
    evaluate_gap(
        alpha,
        margin,
        baseline.gamma,
        shares,
        baseline.p_api * baseline.rho0 * baseline.eta,
    )
}

/// `(1/gamma) * bracket` with the rival QoS and entry probability held fixed.
pub fn frozen_share_gap(
    alpha: f64,
    margin: f64,
    baseline: &BaselineParams,
    shares: FrozenShares,
    q_rival: f64,
    rho: f64,
) -> f64 {
    let api = baseline.p_api * rho * baseline.eta / q_rival;
    (alpha * margin * shares.own * ((1.0 - shares.own) + shares.rival) - api) / baseline.gamma
}

/// A symmetric Stage-1 instance: `n_rivals` identical rivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Problem {
    pub alpha: f64,
    pub n_rivals: usize,
    pub margin: MarginRule,
}

impl Stage1Problem {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("alpha", format!("{} outside (0, 1]", self.alpha)));
        }
        if self.n_rivals == 0 {
            return Err(Error::invalid("n_rivals", "must be at least 1"));
        }
        if let MarginRule::Exogenous(m) = self.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid("margin", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Interior,
    /// Own QoS projected onto the rivals' level by the scope kink.
    KinkConstrained,
    /// Own QoS pinned at the top of `[0, 1]`.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Solution {
    pub q_own_star: f64,
    pub q_rival_star: f64,
    pub gap: f64,
    pub bracket_value: f64,
    pub discriminates: bool,
    pub profit: UpstreamProfit,
    pub equilibrium: Stage2Equilibrium,
    pub regime: Regime,
    pub converged: bool,
    pub iterations: usize,
    /// Trailing `(q_own, q_rival)` iterates of the outer loop.
    pub trail: Vec<[f64; 2]>,
    pub rival_degenerate: bool,
    /// Margin valuing own share at the solution.
    pub margin: f64,
    /// Entry probability at the rival QoS.
    pub entry_probability: f64,
}

struct OuterState {
    q_own: f64,
    q_rival: f64,
    converged: bool,
    iterations: usize,
    trail: Vec<[f64; 2]>,
    last: GapEvaluation,
}

fn outer_loop(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<OuterState> {
    let n = problem.n_rivals;
    let start = baseline.reference_qos().min(1.0);
    let (mut q_u, mut q_i) = (start, start);
    let mut trail = Vec::with_capacity(cfg.trail_len);
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.outer_max_iter {
        iterations = it;
        let qos = QosProfile::symmetric(q_u, q_i, n)?;
        let eq = stage2_fixed_point(problem.alpha, &qos, baseline, cfg)?;
        if !eq.converged {
            break;
        }
        let shares = FrozenShares {
            own: eq.own_share(),
            rival: eq.rival_share(),
        };
        let margin = problem.margin.margin(&eq, baseline.c_d);
        let rho = entry_probability_unchecked(q_i, baseline);
        let slope = baseline.p_api * rho * local_entry_elasticity(q_i, baseline);
        let next = evaluate_gap(problem.alpha, margin, baseline.gamma, shares, slope)?;
        let change = (next.q_own - q_u).abs().max((next.q_rival - q_i).abs());
        last = Some(next);
        if change < cfg.outer_tol {
            q_u = next.q_own;
            q_i = next.q_rival;
            converged = true;
        } else {
            q_u += cfg.damping * (next.q_own - q_u);
            q_i += cfg.damping * (next.q_rival - q_i);
        }
        if trail.len() == cfg.trail_len {
            trail.remove(0);
        }
        if cfg.trail_len > 0 {
            trail.push([q_u, q_i]);
        }
        if converged {
            break;
        }
    }
    let last = match last {
        Some(v) => v,
        None => return Err(Error::NotConverged("stage-2 equilibrium at the starting point")),
    };
    Ok(OuterState {
        q_own: q_u,
        q_rival: q_i,
        converged,
        iterations,
        trail,
        last,
    })
}

/// Common QoS maximizing provider profit when own and rival QoS are tied.
fn common_qos(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
    start: f64,
) -> Result<(f64, bool)> {
    let n = problem.n_rivals as f64;
    let mut q = start.clamp(1e-6, 1.0);
    for _ in 0..cfg.outer_max_iter {
        let qos = QosProfile::symmetric(q, q, problem.n_rivals)?;
        let eq = stage2_fixed_point(problem.alpha, &qos, baseline, cfg)?;
        if !eq.converged {
            return Ok((q, false));
        }
        let m = problem.margin.margin(&eq, baseline.c_d);
        let a = baseline.gamma * (n + 1.0);
        let b = problem.alpha * m * eq.own_share() * eq.outside_share;
        let c = n
            * baseline.p_api
            * entry_probability_unchecked(q, baseline)
            * local_entry_elasticity(q, baseline);
        let next = ((b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a)).min(1.0);
        if (next - q).abs() < cfg.outer_tol {
            return Ok((next, true));
        }
        q += cfg.damping * (next - q);
    }
    Ok((q, false))
}

fn assemble(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
    q_own: f64,
    q_rival: f64,
    eval: GapEvaluation,
    regime: Regime,
) -> Result<(Stage1Solution, bool)> {
    let qos = QosProfile::symmetric(q_own, q_rival, problem.n_rivals)?;
    let eq = stage2_fixed_point(problem.alpha, &qos, baseline, cfg)?;
    let profit = profit_components(&qos, baseline, problem.margin, &eq);
    let converged = eq.converged;
    let margin = problem.margin.margin(&eq, baseline.c_d);
    Ok((
        Stage1Solution {
            q_own_star: q_own,
            q_rival_star: q_rival,
            gap: q_own - q_rival,
            bracket_value: eval.bracket,
            discriminates: eval.discriminates,
            profit,
            equilibrium: eq,
            regime,
            converged,
            iterations: 0,
            trail: Vec::new(),
            rival_degenerate: eval.rival_degenerate,
            margin,
            entry_probability: entry_probability_unchecked(q_rival, baseline),
        },
        converged,
    ))
}

/// Closes the loop between the Stage-1 first-order conditions and the
/// Stage-2 equilibrium shares.
///
/// Non-convergence is reported through `converged == false` together with
/// the trailing iterates, not as an error.
pub fn stage1_joint_equilibrium(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<Stage1Solution> {
    problem.validate()?;
    baseline.validate()?;
    cfg.validate()?;
    let outer = outer_loop(problem, baseline, cfg)?;
    let regime = if outer.last.own_clamped || outer.last.rival_clamped {
        Regime::Boundary
    } else {
        Regime::Interior
    };
    let (mut sol, eq_ok) = assemble(
        problem,
        baseline,
        cfg,
        outer.q_own,
        outer.q_rival,
        outer.last,
        regime,
    )?;
    sol.converged = outer.converged && eq_ok;
    sol.iterations = outer.iterations;
    sol.trail = outer.trail;

    if baseline.phi > 0.0 && sol.q_own_star < sol.q_rival_star {
        let (q_c, ok) = common_qos(problem, baseline, cfg, sol.q_rival_star)?;
        let qos = QosProfile::symmetric(q_c, q_c, problem.n_rivals)?;
        let eq = stage2_fixed_point(problem.alpha, &qos, baseline, cfg)?;
        let shares = FrozenShares {
            own: eq.own_share(),
            rival: eq.rival_share(),
        };
        let margin = problem.margin.margin(&eq, baseline.c_d);
        let slope = baseline.p_api
            * entry_probability_unchecked(q_c, baseline)
            * local_entry_elasticity(q_c, baseline);
        let eval = evaluate_gap(problem.alpha, margin, baseline.gamma, shares, slope)?;
        let (projected, eq_ok) =
            assemble(problem, baseline, cfg, q_c, q_c, eval, Regime::KinkConstrained)?;
        if projected.profit.total >= sol.profit.total {
            let trail = std::mem::take(&mut sol.trail);
            let iterations = sol.iterations;
            sol = projected;
            sol.converged = ok && eq_ok && outer.converged;
            sol.iterations = iterations;
            sol.trail = trail;
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticsParam {
    Alpha,
    Margin,
    ApiPrice,
    Eta,
    Gamma,
    Rivals,
}

impl StaticsParam {
    pub const ALL: [StaticsParam; 6] = [
        StaticsParam::Alpha,
        StaticsParam::Margin,
        StaticsParam::ApiPrice,
        StaticsParam::Eta,
        StaticsParam::Gamma,
        StaticsParam::Rivals,
    ];

    /// Sign of the gap derivative stated for this parameter; `None` when
    /// the direction is ambiguous.
    pub fn expected_sign(self) -> Option<f64> {
        match self {
            StaticsParam::Alpha | StaticsParam::Margin => Some(1.0),
            StaticsParam::ApiPrice | StaticsParam::Eta | StaticsParam::Gamma => Some(-1.0),
            StaticsParam::Rivals => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StaticsParam::Alpha => "alpha",
            StaticsParam::Margin => "margin",
            StaticsParam::ApiPrice => "p_api",
            StaticsParam::Eta => "eta",
            StaticsParam::Gamma => "gamma",
            StaticsParam::Rivals => "n_rivals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeStaticsReport {
    pub parameter: StaticsParam,
    pub derivative: f64,
    pub expected_sign: Option<f64>,
    /// `None` when no sign is stated.
    pub sign_agrees: Option<bool>,
    /// Set when the perturbation left the admissible domain on one side.
    pub one_sided: bool,
    pub converged: bool,
}

fn sign_agreement(derivative: f64, expected: Option<f64>) -> Option<bool> {
    expected.map(|e| derivative != 0.0 && derivative.signum() == e)
}

/// Central finite differences of the joint-equilibrium gap.
pub fn comparative_statics(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
    params: &[StaticsParam],
    step: f64,
) -> Result<Vec<ComparativeStaticsReport>> {
    if !(step > 0.0 && step < 0.1) {
        return Err(Error::invalid("step", "must lie in (0, 0.1)"));
    }
    problem.validate()?;
    let base = baseline.pinned();
    params
        .par_iter()
        .map(|&param| joint_derivative(problem, &base, cfg, param, step))
        .collect()
}

fn joint_derivative(
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
    param: StaticsParam,
    step: f64,
) -> Result<ComparativeStaticsReport> {
    let solve = |p: &Stage1Problem, b: &BaselineParams| -> Result<(f64, bool)> {
        let s = stage1_joint_equilibrium(p, b, cfg)?;
        Ok((s.gap, s.converged))
    };
    let (derivative, one_sided, converged) = if param == StaticsParam::Rivals {
        let n = problem.n_rivals;
        let up = Stage1Problem {
            n_rivals: n + 1,
            ..*problem
        };
        let (g_up, c_up) = solve(&up, baseline)?;
        if n >= 2 {
            let dn = Stage1Problem {
                n_rivals: n - 1,
                ..*problem
            };
            let (g_dn, c_dn) = solve(&dn, baseline)?;
            (0.5 * (g_up - g_dn), false, c_up && c_dn)
        } else {
            let (g0, c0) = solve(problem, baseline)?;
            (g_up - g0, true, c_up && c0)
        }
    } else {
        let theta = match param {
            StaticsParam::Alpha => problem.alpha,
            StaticsParam::Margin => match problem.margin {
                MarginRule::Exogenous(m) => m,
                MarginRule::StageTwoMarkup => {
                    return Err(Error::invalid(
                        "margin",
                        "the Stage-2 markup is endogenous; use an exogenous margin",
                    ))
                }
            },
            StaticsParam::ApiPrice => baseline.p_api,
            StaticsParam::Eta => baseline.eta,
            StaticsParam::Gamma => baseline.gamma,
            StaticsParam::Rivals => unreachable!(),
        };
        let h = step * theta.abs().max(1e-2);
        let admissible = |v: f64| match param {
            StaticsParam::Alpha => v > 0.0 && v <= 1.0,
            StaticsParam::Margin | StaticsParam::ApiPrice => v >= 0.0,
            _ => v > 0.0,
        };
        let at = |v: f64| -> Result<(f64, bool)> {
            let mut p = *problem;
            let mut b = baseline.clone();
            match param {
                StaticsParam::Alpha => p.alpha = v,
                StaticsParam::Margin => p.margin = MarginRule::Exogenous(v),
                StaticsParam::ApiPrice => b.p_api = v,
                StaticsParam::Eta => b.eta = v,
                StaticsParam::Gamma => b.gamma = v,
                StaticsParam::Rivals => unreachable!(),
            }
            solve(&p, &b)
        };
        let (up_ok, dn_ok) = (admissible(theta + h), admissible(theta - h));
        match (up_ok, dn_ok) {
            (true, true) => {
                let (a, ca) = at(theta + h)?;
                let (b, cb) = at(theta - h)?;
                ((a - b) / (2.0 * h), false, ca && cb)
            }
            (true, false) => {
                let (a, ca) = at(theta + h)?;
                let (b, cb) = at(theta)?;
                ((a - b) / h, true, ca && cb)
            }
            (false, true) => {
                let (a, ca) = at(theta)?;
                let (b, cb) = at(theta - h)?;
                ((a - b) / h, true, ca && cb)
            }
            (false, false) => return Err(Error::domain("no admissible perturbation")),
        }
    };
    let expected = param.expected_sign();
    Ok(ComparativeStaticsReport {
        parameter: param,
        derivative,
        expected_sign: expected,
        sign_agrees: sign_agreement(derivative, expected),
        one_sided,
        converged,
    })
}

/// Central finite differences of [`frozen_share_gap`] with shares, rival QoS
/// and entry probability held fixed. `Rivals` is not a frozen-share parameter
/// and is skipped.
pub fn frozen_share_statics(
    alpha: f64,
    margin: f64,
    baseline: &BaselineParams,
    shares: FrozenShares,
    q_rival: f64,
    rho: f64,
    step: f64,
) -> Vec<ComparativeStaticsReport> {
    let eval = |param: StaticsParam, v: f64| {
        let mut a = alpha;
        let mut m = margin;
        let mut b = baseline.clone();
        match param {
            StaticsParam::Alpha => a = v,
            StaticsParam::Margin => m = v,
            StaticsParam::ApiPrice => b.p_api = v,
            StaticsParam::Eta => b.eta = v,
            StaticsParam::Gamma => b.gamma = v,
            StaticsParam::Rivals => unreachable!(),
        }
        frozen_share_gap(a, m, &b, shares, q_rival, rho)
    };
    [
        (StaticsParam::Alpha, alpha),
        (StaticsParam::Margin, margin),
        (StaticsParam::ApiPrice, baseline.p_api),
        (StaticsParam::Eta, baseline.eta),
        (StaticsParam::Gamma, baseline.gamma),
    ]
    .into_iter()
    .map(|(param, theta)| {
        let h = step * theta.abs().max(1e-2);
        let derivative = (eval(param, theta + h) - eval(param, theta - h)) / (2.0 * h);
        let expected = param.expected_sign();
        ComparativeStaticsReport {
            parameter: param,
            derivative,
            expected_sign: expected,
            sign_agrees: sign_agreement(derivative, expected),
            one_sided: false,
            converged: true,
        }
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn own_qos_vanishes_at_share_boundaries() {
        assert_eq!(optimal_q_own(0.8, 0.4, 0.0, 1.0).unwrap().value, 0.0);
        assert_eq!(optimal_q_own(0.8, 0.4, 1.0, 1.0).unwrap().value, 0.0);
        assert!(optimal_q_own(0.8, 0.4, 1.2, 1.0).is_err());
    }

    #[test]
    fn own_qos_halves_when_gamma_doubles() {
        let a = optimal_q_own(0.8, 0.4, 0.5, 1.0).unwrap().value;
        let b = optimal_q_own(0.8, 0.4, 0.5, 2.0).unwrap().value;
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert!((a - 0.08).abs() < 1e-15);
    }

    #[test]
    fn own_qos_clamp_is_flagged() {
        let c = optimal_q_own(1.0, 100.0, 0.5, 1.0).unwrap();
        assert_eq!(c.value, 1.0);
        assert!(c.clamped);
    }

    #[test]
    fn rival_qos_without_api_price_is_zero() {
        let b = BaselineParams {
            p_api: 0.0,
            ..BaselineParams::default()
        };
        let r = optimal_q_rival(0.8, 0.4, 0.5, 0.1, &b).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn rival_qos_pure_quadratic_root() {
        let b = BaselineParams::default();
        let r = optimal_q_rival(0.0, 0.4, 0.5, 0.1, &b).unwrap();
        assert!((r.value - 0.0375_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gap_identity_at_frozen_shares() {
        let b = BaselineParams {
            gamma: 1.7,
            ..BaselineParams::default()
        };
        let g = qos_gap(0.6, 2.5, &b, FrozenShares { own: 0.3, rival: 0.2 }).unwrap();
        assert!((g.gap * b.gamma - g.bracket).abs() < 1e-12);
        assert_eq!(g.discriminates, g.bracket > 0.0);
    }

    #[test]
    fn no_discrimination_as_alpha_vanishes() {
        let g = qos_gap(
            1e-12,
            0.4,
            &BaselineParams::default(),
            FrozenShares { own: 0.3, rival: 0.2 },
        )
        .unwrap();
        assert!(g.bracket < 0.0);
        assert!(!g.discriminates);
    }

    #[test]
    fn bracket_at_zero_is_not_discrimination() {
        assert!(!sign_agreement(0.0, Some(1.0)).unwrap());
        let g = GapEvaluation {
            q_own: 0.1,
            q_rival: 0.1,
            gap: 0.0,
            bracket: 0.0,
            discriminates: 0.0 > 0.0,
            own_clamped: false,
            rival_clamped: false,
            rival_degenerate: false,
        };
        assert!(!g.discriminates);
    }

    #[test]
    fn joint_solution_is_deterministic_and_consistent() {
        let p = Stage1Problem {
            alpha: 0.7,
            n_rivals: 2,
            margin: MarginRule::StageTwoMarkup,
        };
        let b = BaselineParams::default();
        let cfg = SolverConfig::default();
        let a = stage1_joint_equilibrium(&p, &b, &cfg).unwrap();
        let c = stage1_joint_equilibrium(&p, &b, &cfg).unwrap();
        assert_eq!(a, c);
        assert!(a.converged);
        assert_eq!(a.regime, Regime::Interior);
        assert!((b.gamma * a.gap - a.bracket_value).abs() < 1e-9);
    }

    #[test]
    fn large_kink_weight_forbids_own_below_rival() {
        let p = Stage1Problem {
            alpha: 0.3,
            n_rivals: 3,
            margin: MarginRule::StageTwoMarkup,
        };
        let b = BaselineParams {
            phi: 10.0,
            p_api: 0.6,
            ..BaselineParams::default()
        };
        let s = stage1_joint_equilibrium(&p, &b, &SolverConfig::default()).unwrap();
        assert!(s.q_own_star >= s.q_rival_star);
    }

    #[test]
    fn frozen_gap_is_affine_in_alpha() {
        let b = BaselineParams::default();
        let sh = FrozenShares { own: 0.3, rival: 0.1 };
        let g = |a: f64| frozen_share_gap(a, 1.4, &b, sh, 0.2, 0.5);
        let (g1, g2, g3) = (g(0.2), g(0.5), g(0.9));
        assert!(((g3 - g2) / 0.4 - (g2 - g1) / 0.3).abs() < 1e-9);
    }

    #[test]
    fn statics_reject_bad_step() {
        let p = Stage1Problem {
            alpha: 0.7,
            n_rivals: 2,
            margin: MarginRule::Exogenous(1.0),
        };
        let r = comparative_statics(
            &p,
            &BaselineParams::default(),
            &SolverConfig::default(),
            &[StaticsParam::Alpha],
            0.0,
        );
        assert!(r.is_err());
    }
}
