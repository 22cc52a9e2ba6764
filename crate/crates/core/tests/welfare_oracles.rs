use foreclosure_core::foreclosure::{stage1_joint_equilibrium, Stage1Problem};
use foreclosure_core::model::{stage2_fixed_point, BaselineParams, MarginRule, QosProfile};
use foreclosure_core::welfare::{
    designate, optimal_tolerance, planner_optimum, welfare_decomposition, welfare_scenarios,
    welfare_total, ByCase, DesignationInput, DesignationThresholds, Pillar4Flags, ToleranceProblem,
    Verdict, WelfareRow, WelfareTableSpec,
};
use foreclosure_core::SolverConfig;
use foreclosure_testkit::{planner_grid, welfare as grid_welfare};
use proptest::prelude::*;

fn w(alpha: f64, n: usize, u: f64, r: f64, b: &BaselineParams, cfg: &SolverConfig) -> f64 {
    let qos = QosProfile::symmetric(u, r, n).unwrap();
    let eq = stage2_fixed_point(alpha, &qos, b, cfg).unwrap();
    welfare_total(&eq, &qos, b).unwrap()
}

#[test]
fn welfare_total_matches_direct_sum() {
    let b = BaselineParams { phi: 0.1, c_d: 0.05, ..Default::default() };
    let cfg = SolverConfig::default();
    for (u, r) in [(0.2, 0.6), (0.7, 0.3), (0.0, 0.0), (1.0, 1.0)] {
        let got = w(0.6, 3, u, r, &b, &cfg);
        let want = grid_welfare(0.6, 3, u, r, &b, &cfg);
        assert!((got - want).abs() < 1e-12, "({u}, {r}): {got} vs {want}");
    }
}

#[test]
fn planner_dominates_grid_and_private_choice() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    for (alpha, n) in [(0.5, 1), (0.7, 2), (0.9, 3)] {
        let planner = planner_optimum(alpha, n, &b, &cfg).unwrap();
        let grid = planner_grid(alpha, n, &b, 81, &cfg);
        assert!(planner.welfare >= grid.value - 1e-12, "alpha {alpha}: {} < grid {}", planner.welfare, grid.value);

        let problem = Stage1Problem { alpha, n_rivals: n, margin: MarginRule::StageTwoMarkup };
        let private = stage1_joint_equilibrium(&problem, &b, &cfg).unwrap();
        let w_private = w(alpha, n, private.q_own_star, private.q_rival_star, &b, &cfg);
        assert!(planner.welfare >= w_private - 1e-12);
    }
}

#[test]
fn welfare_rises_toward_planner_rival_qos() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    let (alpha, n) = (0.7, 2);
    let p = planner_optimum(alpha, n, &b, &cfg).unwrap();
    assert!(p.q_rival > 0.05);
    let mut last = f64::NEG_INFINITY;
    for i in 0..=10 {
        let r = p.q_rival * i as f64 / 10.0;
        let v = w(alpha, n, p.q_own, r, &b, &cfg);
        assert!(v >= last - 1e-12, "welfare fell at q_i = {r}");
        last = v;
    }
}

#[test]
fn decomposition_sums_to_welfare_gap() {
    let b = BaselineParams::default();
    let cfg = SolverConfig::default();
    for (alpha, n) in [(0.6, 1), (0.8, 2)] {
        let problem = Stage1Problem { alpha, n_rivals: n, margin: MarginRule::StageTwoMarkup };
        let private = stage1_joint_equilibrium(&problem, &b, &cfg).unwrap();
        let d = welfare_decomposition(&private, &problem, &b, &cfg).unwrap();
        assert!((d.total - (d.w_planner - d.w_private)).abs() < 1e-8);
        assert!(d.total >= -1e-12);
    }
}

fn input(dep: bool, int: bool, disc: bool, lock: bool) -> DesignationInput {
    DesignationInput {
        name: "x".into(),
        alpha: if dep { 0.8 } else { 0.3 },
        lambda: if int { 0.8 } else { 0.3 },
        switching_cost: if lock { 0.8 } else { 0.3 },
        tau: None,
        kappa: None,
        measured_gap: Some(if disc { 0.2 } else { 0.01 }),
        pillar4: None,
    }
}

#[test]
fn designation_lattice_is_exhaustive() {
    let th = DesignationThresholds::default();
    for mask in 0u8..16 {
        let f = |bit: u8| mask & (1 << bit) != 0;
        let a = designate(&input(f(0), f(1), f(2), f(3)), &th).unwrap();
        let met = mask.count_ones();
        let want = match met {
            4 => Verdict::Designate,
            3 => Verdict::Monitor,
            _ => Verdict::None,
        };
        assert_eq!(a.verdict, want, "mask {mask:04b}");
        assert_eq!([a.dependence, a.integration, a.discrimination, a.lock_in], [f(0), f(1), f(2), f(3)]);
    }
}

#[test]
fn tier_route_with_published_carve_out_is_conditional() {
    let th = DesignationThresholds::default();
    let flags = Pillar4Flags { purpose_published: true, partner_set_inclusive: true, release_pathway_published: true };
    let mut x = input(true, true, false, true);
    x.measured_gap = None;
    x.tau = Some(0.325);
    x.kappa = Some(0.95);
    x.pillar4 = Some(flags);
    assert_eq!(designate(&x, &th).unwrap().verdict, Verdict::Conditional);
    x.pillar4 = Some(Pillar4Flags { release_pathway_published: false, ..flags });
    assert_eq!(designate(&x, &th).unwrap().verdict, Verdict::Designate);
    x.measured_gap = Some(0.3);
    x.pillar4 = Some(flags);
    assert_eq!(designate(&x, &th).unwrap().verdict, Verdict::Designate);
}

#[test]
fn welfare_table_arithmetic() {
    let row = |channel: &str, users: Option<f64>, central: Option<f64>, declared: [f64; 3]| WelfareRow {
        channel: channel.into(),
        affected_users: users,
        per_user: ByCase { low: None, central, high: None },
        declared: ByCase { low: Some(declared[0]), central: Some(declared[1]), high: Some(declared[2]) },
    };
    let spec = WelfareTableSpec {
        rows: vec![
            row("a", Some(2.0e9), Some(10.0), [10.0, 20.0, 30.0]),
            row("b", Some(1.0e9), Some(5.0), [2.0, 7.0, 9.0]),
            row("c", None, None, [1.0, 1.0, 1.0]),
        ],
        declared_totals: ByCase { low: 13.0, central: 28.0, high: 45.0 },
        innovation_offset: 0.15,
    };
    let t = welfare_scenarios(&spec).unwrap();
    let cells: Vec<&str> = t.inconsistencies.iter().map(|i| i.cell.as_str()).collect();
    assert_eq!(cells, ["b/central", "total/high"]);
    let central = &t.totals[1];
    assert_eq!(central.summed, 28.0);
    assert!((central.net_of_offset - 28.0 * 0.85).abs() < 1e-12);
    let a = t.cells.iter().find(|c| c.channel == "a" && c.consistent.is_some()).unwrap();
    assert_eq!(a.computed, Some(20.0));
}

proptest! {
    #[test]
    fn tolerance_matches_closed_form(a in 0.1f64..5.0, slope in 0.01f64..3.0, c in 0.1f64..5.0) {
        let p = ToleranceProblem { competition_curvature: a, innovation_slope: slope, innovation_curvature: c, epsilon_bar: 1e3 };
        let s = optimal_tolerance(&p).unwrap();
        let closed = slope / (2.0 * (a + c));
        prop_assert!(s.interior);
        prop_assert!((s.epsilon_star - closed).abs() < 1e-10);
    }

    #[test]
    fn tolerance_binds_at_cap(a in 0.1f64..5.0, slope in 0.01f64..3.0, c in 0.1f64..5.0) {
        let closed = slope / (2.0 * (a + c));
        let p = ToleranceProblem { competition_curvature: a, innovation_slope: slope, innovation_curvature: c, epsilon_bar: 0.5 * closed };
        let s = optimal_tolerance(&p).unwrap();
        prop_assert!(!s.interior);
        prop_assert_eq!(s.epsilon_star, 0.5 * closed);
    }
}
