//! Planner benchmark, welfare decomposition, scenario arithmetic,
//! designation rules and the tolerance band.

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::foreclosure::{Clamped, Stage1Problem, Stage1Solution};
use crate::model::{infra_cost, stage2_fixed_point, BaselineParams, QosProfile, Stage2Equilibrium};
use crate::roots::{brent, golden_max, ScalarOptions};

/// Symmetric first-best QoS `alpha s (1 - s) / gamma`. A share on the
/// boundary of `[0, 1]` yields zero with `clamped` set.
pub fn first_best_qos(alpha: f64, s: f64, gamma: f64) -> Result<Clamped> {
    if !(gamma > 0.0) {
        return Err(Error::domain("gamma must be > 0"));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("share {s} outside [0, 1]")));
    }
    if s == 0.0 || s == 1.0 {
        return Ok(Clamped { value: 0.0, clamped: true });
    }
    Ok(Clamped {
        value: alpha * s * (1.0 - s) / gamma,
        clamped: false,
    })
}

/// `sum_i s_i Q_i - c_d sum_i s_i - C(q)`.
pub fn welfare_total(eq: &Stage2Equilibrium, qos: &QosProfile, baseline: &BaselineParams) -> Result<f64> {
    if !eq.converged {
        return Err(Error::NotConverged("stage-2 equilibrium"));
    }
    let gross: f64 = eq
        .shares
        .iter()
        .zip(&eq.qualities)
        .map(|(s, q)| s * q - baseline.c_d * s)
        .sum();
    Ok(gross - infra_cost(qos, baseline))
}

fn welfare_at(
    alpha: f64,
    n: usize,
    q_own: f64,
    q_rival: f64,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<f64> {
    let qos = QosProfile::symmetric(q_own, q_rival, n)?;
    let eq = stage2_fixed_point(alpha, &qos, baseline, cfg)?;
    welfare_total(&eq, &qos, baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptimum {
    pub q_own: f64,
    pub q_rival: f64,
    pub welfare: f64,
}

/// Welfare-maximizing `(q_own, q_rival)` with symmetric rivals: a 41x41
/// scan followed by nested golden-section refinement around the best node.
pub fn planner_optimum(
    alpha: f64,
    n_rivals: usize,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<PlannerOptimum> {
    const NODES: usize = 41;
    let h = 1.0 / (NODES - 1) as f64;
    let mut best = PlannerOptimum { q_own: 0.0, q_rival: 0.0, welfare: f64::NEG_INFINITY };
    for i in 0..NODES {
        for j in 0..NODES {
            let (u, r) = (i as f64 * h, j as f64 * h);
            let w = welfare_at(alpha, n_rivals, u, r, baseline, cfg)?;
            if w > best.welfare {
                best = PlannerOptimum { q_own: u, q_rival: r, welfare: w };
            }
        }
    }
    let (u_lo, u_hi) = ((best.q_own - h).max(0.0), (best.q_own + h).min(1.0));
    let (r_lo, r_hi) = ((best.q_rival - h).max(0.0), (best.q_rival + h).min(1.0));
    let inner = |u: f64| {
        golden_max(
            |r| welfare_at(alpha, n_rivals, u, r, baseline, cfg).unwrap_or(f64::NEG_INFINITY),
            r_lo,
            r_hi,
            1e-9,
        )
    };
    let outer = golden_max(|u| inner(u).value, u_lo, u_hi, 1e-9);
    let r = inner(outer.argmax);
    if r.value > best.welfare {
        best = PlannerOptimum { q_own: outer.argmax, q_rival: r.argmax, welfare: r.value };
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareDecomposition {
    pub q_first_best: f64,
    /// `alpha * sum_i s (q_FB - q_i*)`.
    pub direct_loss: f64,
    /// `(1 - alpha) / (k alpha) * de/dq`.
    pub effort_multiplier: f64,
    /// Residual `(W_planner - W_private) - direct_loss (1 + beta)`.
    pub business_stealing: f64,
    pub total: f64,
    pub effort_slope: f64,
    pub w_planner: f64,
    pub w_private: f64,
    pub planner: PlannerOptimum,
}

/// Rival effort response to its own QoS, by central difference at `qos`.
pub fn rival_effort_slope(
    alpha: f64,
    qos: &QosProfile,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
    step: f64,
) -> Result<f64> {
    let q = qos.rivals.first().copied().ok_or_else(|| Error::domain("no rivals"))?;
    let effort_at = |v: f64| -> Result<f64> {
        let mut rivals = qos.rivals.clone();
        rivals[0] = v;
        let p = QosProfile::new(qos.own, rivals)?;
        Ok(stage2_fixed_point(alpha, &p, baseline, cfg)?.efforts[1])
    };
    let up = (q + step).min(1.0);
    let dn = (q - step).max(0.0);
    Ok((effort_at(up)? - effort_at(dn)?) / (up - dn))
}

pub fn welfare_decomposition(
    private: &Stage1Solution,
    problem: &Stage1Problem,
    baseline: &BaselineParams,
    cfg: &SolverConfig,
) -> Result<WelfareDecomposition> {
    if !private.converged {
        return Err(Error::NotConverged("private stage-1 solution"));
    }
    let alpha = problem.alpha;
    let n = problem.n_rivals;
    let s = private.equilibrium.rival_share();
    let q_fb = first_best_qos(alpha, s, baseline.gamma)?.value;
    let direct_loss = alpha * n as f64 * s * (q_fb - private.q_rival_star);

    let qos = QosProfile::symmetric(private.q_own_star, private.q_rival_star, n)?;
    let slope = rival_effort_slope(alpha, &qos, baseline, cfg, 1e-4)?;
    let effort_multiplier = (1.0 - alpha) / (baseline.k * alpha) * slope;

    let w_private = welfare_total(&private.equilibrium, &qos, baseline)?;
    let planner = planner_optimum(alpha, n, baseline, cfg)?;
    let business_stealing = (planner.welfare - w_private) - direct_loss * (1.0 + effort_multiplier);
    Ok(WelfareDecomposition {
        q_first_best: q_fb,
        direct_loss,
        effort_multiplier,
        business_stealing,
        total: direct_loss * (1.0 + effort_multiplier) + business_stealing,
        effort_slope: slope,
        w_planner: planner.welfare,
        w_private,
        planner,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Low,
    Central,
    High,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Low, Case::Central, Case::High];

    pub fn name(self) -> &'static str {
        match self {
            Case::Low => "low",
            Case::Central => "central",
            Case::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ByCase<T> {
    pub low: T,
    pub central: T,
    pub high: T,
}

impl<T: Copy> ByCase<T> {
    pub fn get(&self, case: Case) -> T {
        match case {
            Case::Low => self.low,
            Case::Central => self.central,
            Case::High => self.high,
        }
    }
}

/// One channel of the annual welfare-loss table. Money in billions of
/// dollars; per-user values in dollars per user per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareRow {
    pub channel: String,
    #[serde(default)]
    pub affected_users: Option<f64>,
    #[serde(default)]
    pub per_user: ByCase<Option<f64>>,
    #[serde(default)]
    pub declared: ByCase<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareTableSpec {
    pub rows: Vec<WelfareRow>,
    pub declared_totals: ByCase<f64>,
    #[serde(default = "default_offset")]
    pub innovation_offset: f64,
}

fn default_offset() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareCell {
    pub channel: String,
    pub case: Case,
    pub affected_users: Option<f64>,
    pub per_user: Option<f64>,
    /// `users x per_user`, billions.
    pub computed: Option<f64>,
    pub declared: Option<f64>,
    /// `None` when nothing was recomputed.
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareTotal {
    pub case: Case,
    /// Sum of declared channel values.
    pub summed: f64,
    pub declared: f64,
    pub consistent: bool,
    /// `summed * (1 - innovation_offset)`.
    pub net_of_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inconsistency {
    /// `channel/case` or `total/case`.
    pub cell: String,
    pub computed: f64,
    pub declared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareTable {
    pub cells: Vec<WelfareCell>,
    pub totals: Vec<WelfareTotal>,
    pub inconsistencies: Vec<Inconsistency>,
    pub innovation_offset: f64,
}

fn same_billion(a: f64, b: f64) -> bool {
    a.round() == b.round()
}

/// Recomputes channel cells from per-user values where stated and sums the
/// declared rows; disagreements are reported, never corrected.
pub fn welfare_scenarios(spec: &WelfareTableSpec) -> Result<WelfareTable> {
    if !(0.10..=0.20).contains(&spec.innovation_offset) {
        return Err(Error::invalid("welfare.innovation_offset", "must lie in [0.10, 0.20]"));
    }
    let mut cells = Vec::new();
    let mut inconsistencies = Vec::new();
    for (i, row) in spec.rows.iter().enumerate() {
        if let Some(u) = row.affected_users {
            if !(u >= 0.0) {
                return Err(Error::invalid(format!("welfare.rows[{i}].affected_users"), "must be >= 0"));
            }
        }
        for case in Case::ALL {
            let per_user = row.per_user.get(case);
            let declared = row.declared.get(case);
            let computed = match (row.affected_users, per_user) {
                (Some(u), Some(v)) => Some(u * v / 1e9),
                _ => None,
            };
            let consistent = match (computed, declared) {
                (Some(c), Some(d)) => Some(same_billion(c, d)),
                _ => None,
            };
            if let (Some(false), Some(c), Some(d)) = (consistent, computed, declared) {
                inconsistencies.push(Inconsistency {
                    cell: format!("{}/{}", row.channel, case.name()),
                    computed: c,
                    declared: d,
                });
            }
            cells.push(WelfareCell {
                channel: row.channel.clone(),
                case,
                affected_users: row.affected_users,
                per_user,
                computed,
                declared,
                consistent,
            });
        }
    }
    let totals = Case::ALL
        .iter()
        .map(|&case| {
            let summed: f64 = spec.rows.iter().filter_map(|r| r.declared.get(case)).sum();
            let declared = spec.declared_totals.get(case);
            let consistent = same_billion(summed, declared);
            if !consistent {
                inconsistencies.push(Inconsistency {
                    cell: format!("total/{}", case.name()),
                    computed: summed,
                    declared,
                });
            }
            WelfareTotal {
                case,
                summed,
                declared,
                consistent,
                net_of_offset: summed * (1.0 - spec.innovation_offset),
            }
        })
        .collect();
    Ok(WelfareTable {
        cells,
        totals,
        inconsistencies,
        innovation_offset: spec.innovation_offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pillar4Flags {
    pub purpose_published: bool,
    pub partner_set_inclusive: bool,
    pub release_pathway_published: bool,
}

impl Pillar4Flags {
    pub fn all(&self) -> bool {
        self.purpose_published && self.partner_set_inclusive && self.release_pathway_published
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignationThresholds {
    pub alpha: f64,
    pub lambda: f64,
    pub gap: f64,
    pub tau_kappa: f64,
    pub switching_cost: f64,
}

impl Default for DesignationThresholds {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 0.5,
            gap: 0.1,
            tau_kappa: 0.2,
            switching_cost: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignationInput {
    pub name: String,
    pub alpha: f64,
    pub lambda: f64,
    pub switching_cost: f64,
    pub tau: Option<f64>,
    pub kappa: Option<f64>,
    pub measured_gap: Option<f64>,
    pub pillar4: Option<Pillar4Flags>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Designate,
    Conditional,
    Monitor,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorPattern {
    /// Any three of the four criteria.
    ThreeCriteria,
    /// Dependence, integration and lock-in without observed discrimination.
    StructuralCapacity,
    /// No gap observation yet; the discrimination criterion is credited
    /// provisionally for the count.
    PendingObservation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignationAssessment {
    pub name: String,
    pub dependence: bool,
    pub integration: bool,
    pub discrimination: bool,
    pub lock_in: bool,
    pub discrimination_by_gap: bool,
    pub discrimination_by_tier: bool,
    /// Neither a gap nor tier data was available.
    pub evidence_gap: bool,
    pub verdict: Verdict,
    pub monitor_pattern: Option<MonitorPattern>,
    pub rationale: String,
}

pub fn designate(input: &DesignationInput, th: &DesignationThresholds) -> Result<DesignationAssessment> {
    if let Some(g) = input.measured_gap {
        if !g.is_finite() {
            return Err(Error::invalid("measured_gap", "must be finite"));
        }
    }
    let dependence = input.alpha > th.alpha;
    let integration = input.lambda > th.lambda;
    let lock_in = input.switching_cost > th.switching_cost;
    let by_gap = input.measured_gap.is_some_and(|g| g > th.gap);
    let tier_product = match (input.tau, input.kappa) {
        (Some(t), Some(k)) => Some(t * k),
        _ => None,
    };
    let by_tier = tier_product.is_some_and(|p| p > th.tau_kappa);
    let discrimination = by_gap || by_tier;
    let evidence_gap = input.measured_gap.is_none() && tier_product.is_none();
    let pending = input.measured_gap.is_none() && !discrimination;
    let carve_out = by_tier && input.pillar4.is_some_and(|f| f.all());

    let flags = [dependence, integration, discrimination, lock_in];
    let met = flags.iter().filter(|&&f| f).count();
    let (verdict, pattern) = if met == 4 && !(carve_out && !by_gap) {
        (Verdict::Designate, None)
    } else if carve_out {
        (Verdict::Conditional, None)
    } else if met >= 3 {
        let p = if dependence && integration && lock_in && !discrimination {
            MonitorPattern::StructuralCapacity
        } else {
            MonitorPattern::ThreeCriteria
        };
        (Verdict::Monitor, Some(p))
    } else if pending && met + 1 >= 3 {
        (Verdict::Monitor, Some(MonitorPattern::PendingObservation))
    } else {
        (Verdict::None, None)
    };

    let labels = ["dependence", "integration", "discrimination", "lock-in"];
    let listed: Vec<&str> = labels
        .iter()
        .zip(flags)
        .filter(|(_, f)| *f)
        .map(|(l, _)| *l)
        .collect();
    let mut rationale = if listed.is_empty() {
        "no criteria met".to_string()
    } else {
        format!("{met} of 4 met: {}", listed.join(", "))
    };
    if by_tier {
        rationale.push_str(&format!("; tier trigger tau*kappa = {:.4}", tier_product.unwrap_or(0.0)));
    }
    if carve_out {
        rationale.push_str("; safety carve-out conditions all published");
    }
    if evidence_gap {
        rationale.push_str("; evidence gap: no QoS gap or tier observation");
    } else if pending {
        rationale.push_str("; QoS gap pending observation");
    }
    Ok(DesignationAssessment {
        name: input.name.clone(),
        dependence,
        integration,
        discrimination,
        lock_in,
        discrimination_by_gap: by_gap,
        discrimination_by_tier: by_tier,
        evidence_gap,
        verdict,
        monitor_pattern: pattern,
        rationale,
    })
}

/// Quadratic curves `W_comp = -a e^2` and `W_innov = b e - c e^2` on `[0, e_bar]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceProblem {
    pub competition_curvature: f64,
    pub innovation_slope: f64,
    pub innovation_curvature: f64,
    pub epsilon_bar: f64,
}

impl ToleranceProblem {
    pub fn welfare(&self, e: f64) -> f64 {
        -self.competition_curvature * e * e + self.innovation_slope * e
            - self.innovation_curvature * e * e
    }

    /// `dW_comp/de + dW_innov/de`.
    pub fn marginal(&self, e: f64) -> f64 {
        -2.0 * self.competition_curvature * e + self.innovation_slope
            - 2.0 * self.innovation_curvature * e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceBoundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSolution {
    pub epsilon_star: f64,
    pub interior: bool,
    pub boundary: Option<ToleranceBoundary>,
    pub marginal_at_solution: f64,
    pub welfare: f64,
}

pub fn optimal_tolerance(problem: &ToleranceProblem) -> Result<ToleranceSolution> {
    let p = problem;
    if !(p.epsilon_bar > 0.0 && p.epsilon_bar.is_finite()) {
        return Err(Error::invalid("tolerance.epsilon_bar", "must be finite and > 0"));
    }
    for (name, v) in [
        ("competition_curvature", p.competition_curvature),
        ("innovation_slope", p.innovation_slope),
        ("innovation_curvature", p.innovation_curvature),
    ] {
        if !v.is_finite() {
            return Err(Error::invalid(format!("tolerance.{name}"), "must be finite"));
        }
    }
    let (d0, d1) = (p.marginal(0.0), p.marginal(p.epsilon_bar));
    let boundary = |e: f64, side| ToleranceSolution {
        epsilon_star: e,
        interior: false,
        boundary: Some(side),
        marginal_at_solution: p.marginal(e),
        welfare: p.welfare(e),
    };
    if d0 > 0.0 && d1 < 0.0 {
        let r = brent(|e| p.marginal(e), 0.0, p.epsilon_bar, ScalarOptions::default())?;
        return Ok(ToleranceSolution {
            epsilon_star: r.root,
            interior: true,
            boundary: None,
            marginal_at_solution: r.residual,
            welfare: p.welfare(r.root),
        });
    }
    if p.welfare(p.epsilon_bar) > p.welfare(0.0) {
        Ok(boundary(p.epsilon_bar, ToleranceBoundary::Upper))
    } else {
        Ok(boundary(0.0, ToleranceBoundary::Lower))
    }
}
