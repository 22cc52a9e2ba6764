use foreclosure_core::audit::episode::{CapacityShock, StepDegradation};
use foreclosure_core::audit::power::replicate;
use foreclosure_core::audit::{
    bimodality_detect, degradation_episode, estimate, generate, power_analysis, simulate_benchmark_scores, Attribution,
    AuditConfig, BenchmarkSim, ChannelLoading, Confounders, EpisodeConfig, Strata,
};

fn config(gap: f64, samples: usize) -> AuditConfig {
    AuditConfig {
        true_gap: gap,
        noise_sd: 0.05,
        confounders: Confounders { capacity_shock: 0.1, time_of_day: 0.05, workload_drift: 0.002 },
        strata: Strata { regions: 2, tiers: 2, volumes: 2 },
        samples_per_stratum: samples,
        horizon_days: 28,
        seed: 20260415,
        base_qos: 0.7,
        stratum_effect_sd: 0.05,
        loading: ChannelLoading::default(),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let v: Vec<f64> = xs.collect();
    (v.iter().sum::<f64>() / v.len() as f64, v.len())
}

#[test]
fn size_control_and_coverage_at_zero_gap() {
    let ests = replicate(&config(0.0, 1250), 0.0, 0.05, 1000).unwrap();
    let rate = ests.iter().filter(|e| e.exceeds_tolerance).count() as f64 / 1000.0;
    let mc = (0.05 * 0.95 / 1000.0_f64).sqrt();
    assert!(rate <= 0.05 + 3.0 * mc, "false detections {rate}");
    let covered = ests.iter().filter(|e| e.ci_low <= 0.0 && 0.0 <= e.ci_high).count() as f64 / 1000.0;
    assert!((covered - 0.95).abs() <= 3.0 * mc, "coverage {covered}");
    assert!(ests.iter().all(|e| e.estimate.abs() < 0.005));
    let small = ests.iter().filter(|e| e.estimate.abs() < 0.002).count() as f64 / 1000.0;
    assert!(small > 0.9, "{small}");
}

#[test]
fn injected_gap_recovered_without_bias() {
    let ests = replicate(&config(0.1, 63), 0.0, 0.05, 1000).unwrap();
    let (m, n) = mean(ests.iter().map(|e| e.estimate));
    let sd = (ests.iter().map(|e| (e.estimate - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    assert!((m - 0.1).abs() < 0.005);
    assert!((m - 0.1).abs() < 3.0 * sd / (n as f64).sqrt());
}

#[test]
fn confounders_do_not_move_the_estimate() {
    let quiet = AuditConfig { confounders: Confounders::default(), ..config(0.05, 63) };
    let loud = AuditConfig { confounders: Confounders { capacity_shock: 1.0, time_of_day: 0.5, workload_drift: 0.05 }, ..config(0.05, 63) };
    let a = replicate(&quiet, 0.0, 0.05, 400).unwrap();
    let b = replicate(&loud, 0.0, 0.05, 400).unwrap();
    let (ma, _) = mean(a.iter().map(|e| e.estimate));
    let (mb, _) = mean(b.iter().map(|e| e.estimate));
    let se = a[0].standard_error * (2.0 / 400.0_f64).sqrt();
    assert!((ma - mb).abs() < 4.0 * se, "{ma} vs {mb}");
}

#[test]
fn boundary_gap_is_not_flagged() {
    let c = AuditConfig { noise_sd: 0.001, ..config(0.1, 500) };
    let e = estimate(&generate(&c).unwrap(), 0.1, 0.05).unwrap();
    assert!(e.ci_low <= e.estimate && e.estimate <= e.ci_high);
    assert!(!e.exceeds_tolerance);
}

#[test]
fn power_is_monotone_and_consistent() {
    let s = power_analysis(&config(0.0, 10), &[0.0, 0.01, 0.03], &[80, 400], 0.0, 0.05, 300).unwrap();
    let cell = |g: f64, n: usize| s.cells.iter().find(|c| c.gap == g && c.n_pairs == n).unwrap().power;
    for n in [80, 400] {
        assert!(cell(0.0, n) <= 0.05 + 3.0 * (0.05 * 0.95 / 300.0_f64).sqrt());
        assert!(cell(0.01, n) + 0.03 >= cell(0.0, n));
        assert!(cell(0.03, n) + 0.03 >= cell(0.01, n));
    }
    assert!(cell(0.01, 400) + 0.03 >= cell(0.01, 80));
    assert!(cell(0.03, 400) > 0.99);
    let again = power_analysis(&config(0.0, 10), &[0.0, 0.01, 0.03], &[80, 400], 0.0, 0.05, 300).unwrap();
    assert_eq!(s, again);
}

#[test]
fn replications_ignore_thread_count() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| replicate(&config(0.02, 20), 0.0, 0.05, 64).unwrap())
    };
    assert_eq!(run(1), run(4));
}

fn sim(tau: f64, kappa: f64) -> BenchmarkSim {
    BenchmarkSim { frontier_score: 0.8, tau, kappa, n_partner: 12, n_non_partner: 200, noise_sd: 0.05 }
}

#[test]
fn tier_gap_recovered_from_score_classes() {
    let hits = (0..1000)
        .filter(|&r| {
            let rep = bimodality_detect(&simulate_benchmark_scores(&sim(0.3, 0.95), 99, r).unwrap(), 2.0).unwrap();
            rep.detected && (0.25..=0.35).contains(&rep.implied_tau.unwrap())
        })
        .count();
    assert!(hits >= 900, "{hits}");
}

#[test]
fn open_tier_shows_no_separation() {
    let detections = (0..200)
        .filter(|&r| bimodality_detect(&simulate_benchmark_scores(&sim(0.3, 0.0), 5, r).unwrap(), 2.0).unwrap().detected)
        .count();
    assert_eq!(detections, 0);
}

fn episode(step: Option<StepDegradation>, shock: Option<CapacityShock>) -> EpisodeConfig {
    EpisodeConfig {
        audit: AuditConfig { confounders: Confounders { capacity_shock: 0.02, time_of_day: 0.02, workload_drift: 0.0 }, horizon_days: 60, ..config(0.0, 240) },
        step,
        shock,
        z_threshold: 4.0,
        min_effect: 0.01,
    }
}

#[test]
fn pure_capacity_shock_is_benign() {
    let shock = CapacityShock { start_day: 30, end_day: 60, amplitude: 0.1, first_party_loading: 1.0, api_loading: 1.0 };
    let (_, r) = degradation_episode(&episode(None, Some(shock))).unwrap();
    assert_eq!(r.attribution, Attribution::BenignConsistent);
    assert!(r.differential_trend.unwrap().abs() < 1e-3);
}

#[test]
fn api_step_is_discrimination_consistent() {
    let step = StepDegradation { start_day: 30, magnitude: 0.08 };
    let (_, r) = degradation_episode(&episode(Some(step), None)).unwrap();
    assert_eq!(r.attribution, Attribution::DiscriminationConsistent);
    assert_eq!(r.change_day, Some(30));
    assert!((r.differential_step - 0.08).abs() < 4.0 * r.differential_step_se);
}

#[test]
fn asymmetric_shock_is_not_identified() {
    let shock = CapacityShock { start_day: 30, end_day: 60, amplitude: 0.1, first_party_loading: 0.2, api_loading: 1.0 };
    let (_, r) = degradation_episode(&episode(None, Some(shock))).unwrap();
    assert_eq!(r.attribution, Attribution::NotIdentified);
}

mod invariants {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn equal_loading_confounders_cancel_within_pairs(
            shock in 0.0f64..2.0, tod in 0.0f64..1.0, drift in 0.0f64..0.1, gap in -0.2f64..0.2, seed in any::<u64>(),
        ) {
            let c = AuditConfig {
                noise_sd: 0.0,
                confounders: Confounders { capacity_shock: shock, time_of_day: tod, workload_drift: drift },
                seed,
                ..config(gap, 5)
            };
            let e = estimate(&generate(&c).unwrap(), 0.0, 0.05).unwrap();
            prop_assert!((e.estimate - gap).abs() < 1e-9);
        }

        #[test]
        fn interval_and_flag_are_consistent(
            gap in -0.1f64..0.2, noise in 0.0f64..0.2, eps in 0.0f64..0.15, seed in any::<u64>(), n in 2usize..30,
        ) {
            let c = AuditConfig { noise_sd: noise, seed, ..config(gap, n) };
            let e = estimate(&generate(&c).unwrap(), eps, 0.05).unwrap();
            prop_assert!(e.ci_low <= e.estimate && e.estimate <= e.ci_high);
            prop_assert_eq!(e.exceeds_tolerance, e.ci_low > eps);
        }
    }
}
