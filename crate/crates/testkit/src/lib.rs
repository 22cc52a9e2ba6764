//! Brute-force reference computations for the test suites.
//!
//! Everything here deliberately avoids the fast paths in `foreclosure-core`:
//! shares by direct summation, Stage 2 by per-firm bisection, Stage 1 and the
//! planner problem by exhaustive grids.

use foreclosure_core::model::{stage2_fixed_point, BaselineParams, QosProfile};
use foreclosure_core::SolverConfig;
use rayon::prelude::*;

/// Logit shares by direct summation, no overflow guard.
pub fn direct_logit(qualities: &[f64], prices: &[f64]) -> (Vec<f64>, f64) {
    let w: Vec<f64> = qualities
        .iter()
        .zip(prices)
        .map(|(q, p)| (q - p).exp())
        .collect();
    let d = 1.0 + w.iter().sum::<f64>();
    (w.iter().map(|x| x / d).collect(), 1.0 / d)
}

/// Bisection on a sign change, written independently of the core roots module.
pub fn bisection<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "bisection oracle needs a sign change");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn effort(alpha: f64, k: f64, cap: f64, s: f64) -> f64 {
    let markup = 1.0 / (1.0 - s);
    ((1.0 - alpha) / k * markup * s * (1.0 - s)).clamp(0.0, cap)
}

fn net_utility(alpha: f64, q: f64, k: f64, cap: f64, c_d: f64, s: f64) -> f64 {
    alpha * q + (1.0 - alpha) * effort(alpha, k, cap, s) - (c_d + 1.0 / (1.0 - s))
}

/// Stage-2 shares by Gauss-Seidel over firms: each firm's own share solves
/// `s = exp(u(s)) / (A + exp(u(s)))` by bisection, with `A` the outside
/// option plus the other firms' current weights.
pub fn nested_bisection_stage2(
    alpha: f64,
    q: &[f64],
    baseline: &BaselineParams,
    effort_cap: f64,
) -> Vec<f64> {
    let n = q.len();
    let mut w = vec![1.0; n];
    for _ in 0..10_000 {
        let mut delta = 0.0_f64;
        for i in 0..n {
            let others: f64 = 1.0 + (0..n).filter(|&j| j != i).map(|j| w[j]).sum::<f64>();
            let res = |s: f64| {
                let u = net_utility(alpha, q[i], baseline.k, effort_cap, baseline.c_d, s);
                s * (others + u.exp()) - u.exp()
            };
            let s = bisection(res, 1e-14, 1.0 - 1e-12, 1e-15);
            let new_w = net_utility(alpha, q[i], baseline.k, effort_cap, baseline.c_d, s).exp();
            delta = delta.max((new_w - w[i]).abs());
            w[i] = new_w;
        }
        if delta < 1e-14 {
            break;
        }
    }
    let d = 1.0 + w.iter().sum::<f64>();
    w.iter().map(|x| x / d).collect()
}

fn entry(q: f64, b: &BaselineParams) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let q_ref = b.q_ref.unwrap_or_else(|| (b.p_api * b.rho0 * b.eta / b.gamma).sqrt());
    (b.rho0 * (q / q_ref).powf(b.eta)).min(1.0)
}

fn cost(own: f64, rivals: &[f64], b: &BaselineParams) -> f64 {
    let mx = rivals.iter().copied().fold(0.0, f64::max);
    let kink = if own < mx { b.phi * (mx - own) } else { 0.0 };
    0.5 * b.gamma * (own * own + rivals.iter().map(|x| x * x).sum::<f64>()) + kink
}

/// Provider profit with Stage 2 re-solved at `(q_own, q_rival)`.
/// `margin = None` values own share at the Stage-2 markup.
pub fn provider_profit(
    alpha: f64,
    n: usize,
    q_own: f64,
    q_rival: f64,
    b: &BaselineParams,
    margin: Option<f64>,
    cfg: &SolverConfig,
) -> f64 {
    let qos = QosProfile::symmetric(q_own, q_rival, n).unwrap();
    let eq = stage2_fixed_point(alpha, &qos, b, cfg).unwrap();
    assert!(eq.converged);
    let m = margin.unwrap_or(eq.prices[0] - b.c_d);
    let rivals = vec![q_rival; n];
    m * eq.shares[0] - 0.5 * b.k * eq.efforts[0].powi(2) + b.p_api * n as f64 * entry(q_rival, b)
        - cost(q_own, &rivals, b)
}

/// Total surplus `sum s_i Q_i - c_d sum s_i - C` with Stage 2 re-solved.
pub fn welfare(alpha: f64, n: usize, q_own: f64, q_rival: f64, b: &BaselineParams, cfg: &SolverConfig) -> f64 {
    let qos = QosProfile::symmetric(q_own, q_rival, n).unwrap();
    let eq = stage2_fixed_point(alpha, &qos, b, cfg).unwrap();
    assert!(eq.converged);
    let rivals = vec![q_rival; n];
    eq.shares
        .iter()
        .zip(&eq.qualities)
        .map(|(s, q)| s * q - b.c_d * s)
        .sum::<f64>()
        - cost(q_own, &rivals, b)
}

#[derive(Debug, Clone, Copy)]
pub struct GridMax {
    pub value: f64,
    pub q_own: f64,
    pub q_rival: f64,
    pub step: f64,
}

/// Exhaustive `points x points` grid on `[0, 1]^2`.
pub fn grid_max_2d<F: Fn(f64, f64) -> f64 + Sync>(f: F, points: usize) -> GridMax {
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 * h;
            let mut best = GridMax { value: f64::NEG_INFINITY, q_own: a, q_rival: 0.0, step: h };
            for j in 0..points {
                let c = j as f64 * h;
                let v = f(a, c);
                if v > best.value {
                    best = GridMax { value: v, q_own: a, q_rival: c, step: h };
                }
            }
            best
        })
        .reduce(
            || GridMax { value: f64::NEG_INFINITY, q_own: 0.0, q_rival: 0.0, step: h },
            |x, y| {
                if y.value > x.value || (y.value == x.value && (y.q_own, y.q_rival) < (x.q_own, x.q_rival)) {
                    y
                } else {
                    x
                }
            },
        )
}

/// Grid maximum of provider profit over `(q_own, q_rival)`.
pub fn stage1_grid(
    alpha: f64,
    n: usize,
    b: &BaselineParams,
    margin: Option<f64>,
    points: usize,
    cfg: &SolverConfig,
) -> GridMax {
    grid_max_2d(|u, r| provider_profit(alpha, n, u, r, b, margin, cfg), points)
}

/// Grid maximum of welfare over `(q_own, q_rival)`.
pub fn planner_grid(alpha: f64, n: usize, b: &BaselineParams, points: usize, cfg: &SolverConfig) -> GridMax {
    grid_max_2d(|u, r| welfare(alpha, n, u, r, b, cfg), points)
}

/// Grid maximum of welfare over a common QoS level.
pub fn planner_common_grid(alpha: f64, n: usize, b: &BaselineParams, points: usize, cfg: &SolverConfig) -> (f64, f64) {
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let q = i as f64 * h;
            (welfare(alpha, n, q, q, b, cfg), q)
        })
        .fold((f64::NEG_INFINITY, 0.0), |a, x| if x.0 > a.0 { x } else { a })
}

/// Analytic partial derivatives of the frozen-share gap
/// `(1/gamma)[alpha m s_U((1-s_U)+s) - p rho eta / q]`.
pub struct FrozenPartials {
    pub alpha: f64,
    pub margin: f64,
    pub p_api: f64,
    pub eta: f64,
    pub gamma: f64,
}

pub fn frozen_partials(
    alpha: f64,
    margin: f64,
    s_own: f64,
    s_rival: f64,
    q_rival: f64,
    rho: f64,
    b: &BaselineParams,
) -> FrozenPartials {
    let core = s_own * ((1.0 - s_own) + s_rival);
    let gap = (alpha * margin * core - b.p_api * rho * b.eta / q_rival) / b.gamma;
    FrozenPartials {
        alpha: margin * core / b.gamma,
        margin: alpha * core / b.gamma,
        p_api: -rho * b.eta / (b.gamma * q_rival),
        eta: -b.p_api * rho / (b.gamma * q_rival),
        gamma: -gap / b.gamma,
    }
}

/// Positive root of `gamma q^2 + b q - c` by bisection on the residual.
pub fn quadratic_root_by_bisection(gamma: f64, b: f64, c: f64) -> f64 {
    bisection(|q| gamma * q * q + b * q - c, 0.0, 10.0, 1e-14)
}
