use foreclosure_core::model::{
    entry_probability, logit_shares, profit_at, stage2_fixed_point, upstream_profit,
    BaselineParams, MarginRule, QosProfile,
};
use foreclosure_core::SolverConfig;
use foreclosure_testkit::{direct_logit, nested_bisection_stage2};
use proptest::prelude::*;

#[test]
fn five_firm_logit_matches_direct_sum() {
    let q = [0.3, -0.2, 1.1, 0.0, 0.7];
    let p = [1.2, 1.0, 1.5, 1.1, 1.3];
    let s = logit_shares(&q, &p).unwrap();
    let (d, out) = direct_logit(&q, &p);
    for (a, b) in s.inside.iter().zip(&d) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((s.outside - out).abs() < 1e-15);
    assert!((s.inside.iter().sum::<f64>() + s.outside - 1.0).abs() < 1e-15);
}

#[test]
fn stage2_matches_nested_bisection_oracle() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    let qos = QosProfile::symmetric(0.5, 0.5, 2).unwrap();
    let eq = stage2_fixed_point(0.7, &qos, &b, &cfg).unwrap();
    assert!(eq.converged);
    let oracle = nested_bisection_stage2(0.7, &qos.to_vec(), &b, cfg.effort_cap);
    for (a, o) in eq.shares.iter().zip(&oracle) {
        assert!((a - o).abs() < 1e-8, "{a} vs {o}");
    }
}

#[test]
fn stage2_matches_oracle_on_asymmetric_instances() {
    let b = BaselineParams { k: 0.6, ..BaselineParams::default() };
    let cfg = SolverConfig::default();
    for (alpha, q) in [
        (0.4, vec![0.9, 0.1, 0.5]),
        (0.85, vec![0.0, 1.0]),
        (0.55, vec![0.3, 0.3, 0.2, 0.8, 0.6]),
    ] {
        let qos = QosProfile::new(q[0], q[1..].to_vec()).unwrap();
        let eq = stage2_fixed_point(alpha, &qos, &b, &cfg).unwrap();
        let oracle = nested_bisection_stage2(alpha, &q, &b, cfg.effort_cap);
        for (a, o) in eq.shares.iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-8);
        }
    }
}

#[test]
fn entry_elasticity_at_reference_by_finite_difference() {
    let b = BaselineParams::default();
    let q = b.reference_qos();
    let h = 1e-6 * q;
    let up = entry_probability(q + h, &b).unwrap();
    let dn = entry_probability(q - h, &b).unwrap();
    let rho = entry_probability(q, &b).unwrap();
    let el = (up - dn) / (2.0 * h) * q / rho;
    assert!((el - b.eta).abs() < 1e-4);
}

#[test]
fn zero_qos_price_only_profit_matches_direct_evaluation() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    let qos = QosProfile::symmetric(0.0, 0.0, 3).unwrap();
    let (profit, eq) = profit_at(1.0, &qos, &b, MarginRule::StageTwoMarkup, &cfg).unwrap();
    // With alpha = 1 and zero QoS every firm solves s = e^{-1/(1-s)} / (1 + 4 e^{-1/(1-s)}).
    let s = foreclosure_testkit::bisection(
        |s: f64| {
            let w = (-1.0 / (1.0 - s)).exp();
            s - w / (1.0 + 4.0 * w)
        },
        1e-9,
        0.5,
        1e-15,
    );
    assert!((eq.shares[0] - s).abs() < 1e-8);
    let direct = s / (1.0 - s);
    assert!((profit.total - direct).abs() < 1e-8);
    assert_eq!(profit.api, 0.0);
}

#[test]
fn profit_total_matches_single_expression() {
    let b = BaselineParams { phi: 0.4, ..BaselineParams::default() };
    let cfg = SolverConfig::default();
    let qos = QosProfile::new(0.3, vec![0.5, 0.2]).unwrap();
    let eq = stage2_fixed_point(0.65, &qos, &b, &cfg).unwrap();
    let p = upstream_profit(&qos, &b, MarginRule::StageTwoMarkup, &eq).unwrap();
    let q_ref = (b.p_api * b.rho0 * b.eta / b.gamma).sqrt();
    let rho = |q: f64| (b.rho0 * (q / q_ref).powf(b.eta)).min(1.0);
    let single = (eq.prices[0] - b.c_d) * eq.shares[0] - 0.5 * b.k * eq.efforts[0].powi(2)
        + b.p_api * (rho(0.5) + rho(0.2))
        - (0.5 * b.gamma * (0.09 + 0.25 + 0.04) + b.phi * 0.2);
    assert!((p.total - single).abs() <= 1e-12);
}

fn baseline_strategy() -> impl Strategy<Value = BaselineParams> {
    (0.5..2.0f64, 0.2..0.8f64, 0.0..0.3f64, 0.5..2.0f64).prop_map(|(gamma, eta, p_api, k)| {
        BaselineParams { gamma, eta, p_api, k, ..BaselineParams::default() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shares_normalize(q in prop::collection::vec(-50.0..50.0f64, 1..8),
                        p in prop::collection::vec(-50.0..50.0f64, 8)) {
        let p = &p[..q.len()];
        let s = logit_shares(&q, p).unwrap();
        prop_assert!((s.inside.iter().sum::<f64>() + s.outside - 1.0).abs() < 1e-10);
    }

    #[test]
    fn converged_fixed_points_satisfy_markup_and_effort(
        alpha in 0.05..1.0f64,
        own in 0.0..1.0f64,
        rivals in prop::collection::vec(0.0..1.0f64, 1..6),
        b in baseline_strategy(),
    ) {
        let cfg = SolverConfig::default();
        let qos = QosProfile::new(own, rivals).unwrap();
        let eq = stage2_fixed_point(alpha, &qos, &b, &cfg).unwrap();
        prop_assert!(eq.converged);
        prop_assert!((eq.shares.iter().sum::<f64>() + eq.outside_share - 1.0).abs() < 1e-10);
        for i in 0..eq.shares.len() {
            prop_assert!((eq.prices[i] - b.c_d - 1.0 / (1.0 - eq.shares[i])).abs() < cfg.tol);
            prop_assert!(eq.efforts[i] >= 0.0);
        }
        let again = stage2_fixed_point(alpha, &qos, &b, &cfg).unwrap();
        prop_assert_eq!(eq, again);
    }

    #[test]
    fn effort_rises_with_own_qos(alpha in 0.1..0.95f64, base in 0.0..0.9f64,
                                 n in 1usize..5, bump in 0.01..0.1f64) {
        let b = BaselineParams::default();
        let cfg = SolverConfig::default();
        let lo = QosProfile::symmetric(0.5, base, n).unwrap();
        let mut hi_r = vec![base; n];
        hi_r[0] = base + bump;
        let hi = QosProfile::new(0.5, hi_r).unwrap();
        let e_lo = stage2_fixed_point(alpha, &lo, &b, &cfg).unwrap().efforts[1];
        let e_hi = stage2_fixed_point(alpha, &hi, &b, &cfg).unwrap().efforts[1];
        prop_assert!(e_hi >= e_lo - 1e-12);
    }

    #[test]
    fn raising_one_utility_reallocates_shares(u in prop::collection::vec(-3.0..3.0f64, 2..6),
                                              idx in 0usize..6, bump in 0.01..1.0f64) {
        let i = idx % u.len();
        let zeros = vec![0.0; u.len()];
        let base = logit_shares(&u, &zeros).unwrap();
        let mut up = u.clone();
        up[i] += bump;
        let moved = logit_shares(&up, &zeros).unwrap();
        prop_assert!(moved.inside[i] > base.inside[i]);
        for j in 0..u.len() {
            if j != i {
                prop_assert!(moved.inside[j] < base.inside[j]);
            }
        }
    }

    #[test]
    fn entry_elasticity_on_uncapped_region(q in 0.01..0.3f64, eta in 0.1..0.9f64) {
        let b = BaselineParams { eta, ..BaselineParams::default() };
        let rho = entry_probability(q, &b).unwrap();
        prop_assume!(rho < 0.99);
        let h = 1e-6 * q;
        let d = (entry_probability(q + h, &b).unwrap() - entry_probability(q - h, &b).unwrap()) / (2.0 * h);
        prop_assert!((d * q / rho - eta).abs() < 1e-4);
    }
}
