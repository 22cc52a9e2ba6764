use foreclosure_core::foreclosure::{
    comparative_statics, frozen_share_gap, frozen_share_statics, optimal_q_own, optimal_q_rival,
    qos_gap, stage1_joint_equilibrium, FrozenShares, Regime, Stage1Problem, StaticsParam,
};
use foreclosure_core::model::{BaselineParams, MarginRule};
use foreclosure_core::SolverConfig;
use foreclosure_testkit::{frozen_partials, provider_profit, quadratic_root_by_bisection, stage1_grid};
use proptest::prelude::*;

#[test]
fn own_qos_matches_profit_grid_at_fixed_shares() {
    // With shares responding only through U's own quality index, profit in q_U
    // is m * s_U(Q_U) - gamma q_U^2 / 2 and the grid maximizer must sit on the FOC.
    let (alpha, m, gamma) = (0.8, 0.4, 1.0);
    let s_star = 0.5;
    let q = optimal_q_own(alpha, m, s_star, gamma).unwrap().value;
    // Construct a logit share with s_U(q) = 0.5 at the FOC point.
    let shift = (s_star / (1.0 - s_star)).ln() - alpha * q;
    let profit = |x: f64| {
        let u = alpha * x + shift;
        m * u.exp() / (1.0 + u.exp()) - 0.5 * gamma * x * x
    };
    let grid = (0..=10_000).map(|i| i as f64 / 10_000.0);
    let best = grid.fold((f64::NEG_INFINITY, 0.0), |a, x| {
        let v = profit(x);
        if v > a.0 { (v, x) } else { a }
    });
    assert!((best.1 - q).abs() <= 2e-3, "grid {} vs foc {}", best.1, q);
}

#[test]
fn rival_qos_matches_bisection_oracle() {
    let b = BaselineParams::default();
    let r = optimal_q_rival(0.8, 0.4, 0.5, 0.1, &b).unwrap();
    let oracle = quadratic_root_by_bisection(b.gamma, 0.8 * 0.4 * 0.5 * 0.1, b.p_api * b.rho0 * b.eta);
    assert!((r.value - oracle).abs() < 1e-10);
}

#[test]
fn joint_solution_matches_profit_grid_small_instance() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    let p = Stage1Problem { alpha: 0.7, n_rivals: 2, margin: MarginRule::StageTwoMarkup };
    let sol = stage1_joint_equilibrium(&p, &b, &cfg).unwrap();
    let grid = stage1_grid(0.7, 2, &b, None, 201, &cfg);
    let foc_profit = provider_profit(0.7, 2, sol.q_own_star, sol.q_rival_star, &b, None, &cfg);
    assert!(foc_profit >= grid.value - 1e-3);
    assert!((sol.q_own_star - grid.q_own).abs() <= grid.step);
    assert!((sol.q_rival_star - grid.q_rival).abs() <= grid.step);
}

#[test]
fn knife_edge_gives_zero_gap() {
    // Pick the API price that zeroes the bracket at the joint fixed point.
    let cfg = SolverConfig::default();
    let p = Stage1Problem { alpha: 0.5, n_rivals: 2, margin: MarginRule::Exogenous(0.8) };
    let bracket = |price: f64| {
        let b = BaselineParams { p_api: price, q_ref: Some(0.2), ..BaselineParams::default() };
        stage1_joint_equilibrium(&p, &b, &cfg).unwrap().bracket_value
    };
    let price = foreclosure_testkit::bisection(bracket, 1e-4, 1.0, 1e-13);
    let b = BaselineParams { p_api: price, q_ref: Some(0.2), ..BaselineParams::default() };
    let sol = stage1_joint_equilibrium(&p, &b, &cfg).unwrap();
    assert!(sol.gap.abs() < 1e-8, "gap {}", sol.gap);
    assert!(!sol.discriminates || sol.bracket_value > 0.0);
}

#[test]
fn google_like_joint_statics_signs() {
    let cfg = SolverConfig::default();
    let p = Stage1Problem { alpha: 0.8, n_rivals: 20, margin: MarginRule::Exogenous(11.45) };
    let r = comparative_statics(&p, &BaselineParams::default(), &cfg,
        &[StaticsParam::Margin, StaticsParam::ApiPrice, StaticsParam::Rivals], 1e-4).unwrap();
    assert!(r[0].derivative > 0.0);
    assert_eq!(r[0].sign_agrees, Some(true));
    assert!(r[1].derivative < 0.0);
    assert_eq!(r[2].sign_agrees, None);
}

#[test]
fn one_sided_difference_at_domain_edge() {
    let cfg = SolverConfig::default();
    let p = Stage1Problem { alpha: 1.0, n_rivals: 1, margin: MarginRule::Exogenous(2.0) };
    let r = comparative_statics(&p, &BaselineParams::default(), &cfg,
        &[StaticsParam::Alpha, StaticsParam::Rivals], 1e-4).unwrap();
    assert!(r[0].one_sided);
    assert!(r[1].one_sided);
}

#[test]
fn frozen_statics_match_analytic_partials() {
    let b = BaselineParams::default();
    let sh = FrozenShares { own: 0.25, rival: 0.2 };
    let (alpha, m, q, rho) = (0.7, 1.6, 0.18, 0.48);
    let fd = frozen_share_statics(alpha, m, &b, sh, q, rho, 1e-4);
    let an = frozen_partials(alpha, m, sh.own, sh.rival, q, rho, &b);
    let want = [an.alpha, an.margin, an.p_api, an.eta, an.gamma];
    for (r, w) in fd.iter().zip(want) {
        assert!(((r.derivative - w) / w).abs() < 1e-3, "{:?}: {} vs {}", r.parameter, r.derivative, w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interior_identity_and_condition(alpha in 0.2..0.95f64, n in 1usize..6,
                                       p_api in 0.05..0.3f64, eta in 0.2..0.8f64,
                                       gamma in 0.6..2.0f64, k in 0.5..2.0f64) {
        let b = BaselineParams { p_api, eta, gamma, k, ..BaselineParams::default() };
        let p = Stage1Problem { alpha, n_rivals: n, margin: MarginRule::StageTwoMarkup };
        let s = stage1_joint_equilibrium(&p, &b, &SolverConfig::default()).unwrap();
        prop_assert!(s.converged);
        if s.regime == Regime::Interior {
            prop_assert!((b.gamma * s.gap - s.bracket_value).abs() < 1e-9);
            prop_assert_eq!(s.discriminates, s.gap > 0.0);
        }
        prop_assert_eq!(s.discriminates, s.bracket_value > 0.0);
    }

    #[test]
    fn frozen_signs(alpha in 0.1..0.99f64, m in 0.1..20.0f64, s_own in 0.01..0.6f64,
                    s_rival in 0.01..0.3f64, q in 0.01..1.0f64, rho in 0.01..1.0f64,
                    p_api in 0.01..0.5f64, eta in 0.1..1.0f64, gamma in 0.3..3.0f64) {
        let b = BaselineParams { p_api, eta, gamma, ..BaselineParams::default() };
        let sh = FrozenShares { own: s_own, rival: s_rival };
        let gap = frozen_share_gap(alpha, m, &b, sh, q, rho);
        for r in frozen_share_statics(alpha, m, &b, sh, q, rho, 1e-4) {
            if r.parameter == StaticsParam::Gamma && gap <= 0.0 {
                continue;
            }
            prop_assert_eq!(r.sign_agrees, Some(true), "{:?}", r.parameter);
        }
    }

    #[test]
    fn kink_weight_keeps_own_at_or_above_rival(alpha in 0.2..0.9f64, n in 1usize..4,
                                               p_api in 0.05..0.8f64, phi in 10.0..50.0f64) {
        let b = BaselineParams { p_api, phi, ..BaselineParams::default() };
        let p = Stage1Problem { alpha, n_rivals: n, margin: MarginRule::StageTwoMarkup };
        let s = stage1_joint_equilibrium(&p, &b, &SolverConfig::default()).unwrap();
        prop_assert!(s.q_own_star >= s.q_rival_star - 1e-12);
    }

    #[test]
    fn qos_gap_identity_at_frozen_shares(alpha in 0.05..1.0f64, m in 0.0..5.0f64,
                                         s_own in 0.01..0.99f64, s_rival in 0.01..0.99f64) {
        let b = BaselineParams::default();
        let g = qos_gap(alpha, m, &b, FrozenShares { own: s_own, rival: s_rival }).unwrap();
        if g.q_own < 1.0 {
            prop_assert!((g.gap * b.gamma - g.bracket).abs() < 1e-12);
        }
    }
}
