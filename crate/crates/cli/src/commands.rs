//! One function per subcommand. Each computes rows and hands them to the emitter.

use std::fs;

use foreclosure_core::audit::{
    bimodality_detect, degradation_episode, estimate, generate, power_analysis, simulate_benchmark_scores, AuditConfig,
    EpisodeConfig,
};
use foreclosure_core::calibration::riskmap::solve_profile;
use foreclosure_core::calibration::{
    designation_input, fit_margin_scale, risk_map, sensitivity_sweep, FirmProfile, RiskMapping, RiskSettings,
    Treatment,
};
use foreclosure_core::extensions::dynamic::DynamicMarket;
use foreclosure_core::extensions::tier::TierMarket;
use foreclosure_core::extensions::{entry_deterrence_check, optimal_routing_bias, safety_welfare, tier_foreclosure_gain, TierPolicy};
use foreclosure_core::foreclosure::{comparative_statics, stage1_joint_equilibrium, Stage1Problem, Stage1Solution, StaticsParam};
use foreclosure_core::model::stage2_fixed_point;
use foreclosure_core::welfare::{designate, optimal_tolerance, welfare_decomposition, welfare_scenarios, welfare_total};
use foreclosure_core::{MarginRule, QosProfile};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::output::{to_row, Emitter, Row};
use crate::scenario::Scenario;

pub struct Ctx<'a> {
    pub sc: &'a Scenario,
    pub firm: Option<String>,
    pub seed: Option<u64>,
    pub seed_forced: bool,
    pub em: Emitter,
    pub nonconverged: Vec<String>,
    pub extra: Map<String, Value>,
}

impl Ctx<'_> {
    fn selected(&self, name: &str) -> bool {
        self.firm.as_deref().map_or(true, |f| f == name)
    }

    fn entry_selected(&self, firm: &Option<String>) -> bool {
        self.firm.is_none() || firm.as_deref() == self.firm.as_deref()
    }

    fn settings(&self) -> RiskSettings {
        RiskSettings {
            margin_scale: self.sc.doc.calibration.margin_scale.value,
            thresholds: self.sc.doc.calibration.thresholds,
        }
    }

    fn risk_mapping(&self) -> Result<RiskMapping, CliError> {
        let d = &self.sc.doc;
        Ok(risk_map(&self.sc.profiles.firms, &d.baseline, &self.settings(), &d.solver)?)
    }

    fn flag(&mut self, what: String) {
        self.nonconverged.push(what);
    }
}

fn margin_label(m: &MarginRule) -> Value {
    match m {
        MarginRule::StageTwoMarkup => json!("stage_two_markup"),
        MarginRule::Exogenous(v) => json!(v),
    }
}

fn solution_row(name: &str, p: &Stage1Problem, s: &Stage1Solution) -> Row {
    to_row(&json!({
        "name": name,
        "alpha": p.alpha,
        "n_rivals": p.n_rivals,
        "margin_rule": margin_label(&p.margin),
        "q_own_star": s.q_own_star,
        "q_rival_star": s.q_rival_star,
        "gap": s.gap,
        "bracket": s.bracket_value,
        "discriminates": s.discriminates,
        "regime": s.regime,
        "converged": s.converged,
        "iterations": s.iterations,
        "margin": s.margin,
        "own_share": s.equilibrium.own_share(),
        "rival_share": s.equilibrium.rival_share(),
        "entry_probability": s.entry_probability,
        "profit": s.profit,
        "rival_degenerate": s.rival_degenerate,
    }))
}

pub fn solve(ctx: &mut Ctx) -> Result<(), CliError> {
    let d = &ctx.sc.doc;
    let entries: Vec<_> = d.solve.iter().collect();
    let solved: Vec<_> = entries
        .par_iter()
        .map(|e| {
            let p = Stage1Problem { alpha: e.alpha, n_rivals: e.n_rivals, margin: e.margin };
            let s = stage1_joint_equilibrium(&p, &d.baseline, &d.solver)?;
            let params: Vec<StaticsParam> = StaticsParam::ALL
                .into_iter()
                .filter(|&q| q != StaticsParam::Margin || matches!(p.margin, MarginRule::Exogenous(_)))
                .collect();
            let st = comparative_statics(&p, &d.baseline, &d.solver, &params, d.solver.fd_step)?;
            Ok((e.name.clone(), p, s, st))
        })
        .collect::<Result<_, CliError>>()?;
    let mut rows = Vec::new();
    let mut statics = Vec::new();
    for (name, p, s, st) in solved {
        if !s.converged {
            ctx.flag(format!("solve/{name}"));
        }
        rows.push(solution_row(&name, &p, &s));
        for r in st {
            if !r.converged {
                ctx.flag(format!("solve/{name}/{}", r.parameter.name()));
            }
            statics.push(to_row(&json!({
                "name": name,
                "parameter": r.parameter.name(),
                "derivative": r.derivative,
                "expected_sign": r.expected_sign,
                "sign_agrees": r.sign_agrees,
                "one_sided": r.one_sided,
                "converged": r.converged,
            })));
        }
    }
    ctx.em.table("solve", &rows)?;
    ctx.em.table("statics", &statics)
}

fn gap_profiles<'a>(ctx: &Ctx<'a>) -> Result<Vec<&'a FirmProfile>, CliError> {
    let ps: Vec<&FirmProfile> = ctx
        .sc
        .profiles
        .firms
        .iter()
        .filter(|p| matches!(p.treatment, Treatment::GapSolve | Treatment::Watch))
        .filter(|p| ctx.selected(&p.name))
        .collect();
    if let (Some(f), true) = (&ctx.firm, ps.is_empty()) {
        return Err(CliError::Validation(format!("firm `{f}` has no gap solve in its profile treatment")));
    }
    Ok(ps)
}

pub fn gap(ctx: &mut Ctx) -> Result<(), CliError> {
    let d = &ctx.sc.doc;
    let scale = ctx.settings().margin_scale;
    let solved: Vec<_> = gap_profiles(ctx)?
        .par_iter()
        .map(|p| solve_profile(p, &d.baseline, scale, &d.solver).map(|s| (*p, s)))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (p, s) in solved {
        if !s.converged {
            ctx.flag(format!("gap/{}", p.name));
        }
        rows.push(to_row(&json!({
            "firm": p.name,
            "display_name": p.display_name,
            "treatment": p.treatment,
            "alpha": p.alpha.value,
            "lambda": p.lambda.value,
            "n_rivals": p.n_rivals.as_ref().map(|n| n.value),
            "effective_margin": s.margin,
            "q_own_star": s.q_own_star,
            "q_rival_star": s.q_rival_star,
            "gap": s.gap,
            "bracket": s.bracket_value,
            "discriminates": s.discriminates,
            "regime": s.regime,
            "converged": s.converged,
            "iterations": s.iterations,
        })));
    }
    ctx.em.table("gap", &rows)
}

fn margin_fit(ctx: &mut Ctx) -> Result<(), CliError> {
    let d = &ctx.sc.doc;
    let Some(fit) = &d.calibration.margin_scale.fit else {
        return Ok(());
    };
    let profile = ctx.sc.profiles.firm(&fit.firm).expect("validated");
    let r = fit_margin_scale(profile, &d.baseline, fit.target_gap, (fit.bracket[0], fit.bracket[1]), &d.solver)?;
    let declared = d.calibration.margin_scale.value;
    ctx.extra.insert(
        "margin_fit".into(),
        json!({
            "firm": r.firm,
            "target_gap": r.target_gap,
            "refit_margin_scale": r.margin_scale,
            "fitted_gap": r.fitted_gap,
            "iterations": r.iterations,
            "declared_matches_refit": (r.margin_scale - declared).abs() <= 1e-6 * declared,
        }),
    );
    Ok(())
}

pub fn riskmap(ctx: &mut Ctx) -> Result<(), CliError> {
    margin_fit(ctx)?;
    let m = ctx.risk_mapping()?;
    let selected: Vec<_> = m.rows.iter().filter(|r| ctx.selected(&r.name)).collect();
    let mut rows = Vec::new();
    for r in selected {
        if r.flagged {
            ctx.flag(format!("riskmap/{}", r.name));
        }
        rows.push(to_row(r));
    }
    ctx.extra.insert("top_two".into(), json!(m.top_two()));
    ctx.extra.insert("profile_as_of".into(), json!(m.as_of));
    ctx.em.table("riskmap", &rows)
}

pub fn sweep(ctx: &mut Ctx) -> Result<(), CliError> {
    let d = &ctx.sc.doc;
    let cal = &d.calibration;
    if cal.sweep.is_empty() {
        return Err(CliError::Validation("calibration.sweep: no sweep specs declared".into()));
    }
    let rep = sensitivity_sweep(
        &ctx.sc.profiles.firms,
        &d.baseline,
        &ctx.settings(),
        &d.solver,
        &cal.sweep,
        (cal.eta_band[0], cal.eta_band[1]),
    )?;
    let mut points = Vec::new();
    for pt in &rep.points {
        for r in pt.rows.iter().filter(|r| ctx.selected(&r.name)) {
            let mut row = Map::new();
            row.insert("point".into(), json!(pt.index));
            for v in &pt.values {
                row.insert(v.parameter.name().into(), json!(v.value));
            }
            row.insert("firm".into(), json!(r.name));
            row.insert("gap".into(), json!(r.gap));
            row.insert("band".into(), json!(r.band));
            row.insert("converged".into(), json!(r.converged));
            row.insert("top_two".into(), json!(pt.top_two.join("|")));
            points.push(row);
        }
    }
    let mut summary = Vec::new();
    for iv in rep.intervals.iter().filter(|i| ctx.selected(&i.name)) {
        let band = rep.bands.iter().find(|b| b.name == iv.name);
        let eta = rep.eta_band.iter().find(|e| e.name == iv.name);
        summary.push(to_row(&json!({
            "firm": iv.name,
            "baseline_gap": iv.baseline,
            "min_gap": iv.min,
            "max_gap": iv.max,
            "baseline_band": band.map(|b| b.baseline_band),
            "band_invariant": band.map(|b| b.invariant),
            "eta_lo": eta.map(|e| e.eta_lo),
            "gap_at_eta_lo": eta.and_then(|e| e.gap_at_lo),
            "eta_hi": eta.map(|e| e.eta_hi),
            "gap_at_eta_hi": eta.and_then(|e| e.gap_at_hi),
            "ranking_invariant": rep.ranking_invariant,
        })));
    }
    for f in &rep.failures {
        ctx.flag(format!("sweep/point {}: {}", f.index, f.message));
    }
    ctx.extra.insert(
        "sweep".into(),
        json!({
            "specs": rep.specs,
            "grid_points": rep.points.len(),
            "baseline_top_two": rep.baseline_top_two,
            "ranking_invariant": rep.ranking_invariant,
            "failures": rep.failures.len(),
        }),
    );
    ctx.em.table("sweep_points", &points)?;
    ctx.em.table("sweep_summary", &summary)
}

pub fn welfare(ctx: &mut Ctx) -> Result<(), CliError> {
    let d = &ctx.sc.doc;
    let w = d
        .welfare
        .as_ref()
        .ok_or_else(|| CliError::Validation("welfare: section missing from scenario".into()))?;
    let table = welfare_scenarios(&w.table)?;
    let flagged: Vec<&str> = table.inconsistencies.iter().map(|i| i.cell.as_str()).collect();
    let mut rows = Vec::new();
    for c in &table.cells {
        let id = format!("{}/{}", c.channel, c.case.name());
        rows.push(to_row(&json!({
            "kind": "channel",
            "channel": c.channel,
            "case": c.case,
            "affected_users": c.affected_users,
            "per_user": c.per_user,
            "computed": c.computed,
            "declared": c.declared,
            "consistent": c.consistent,
            "net_of_offset": null,
            "flagged": flagged.contains(&id.as_str()),
        })));
    }
    for t in &table.totals {
        let id = format!("total/{}", t.case.name());
        rows.push(to_row(&json!({
            "kind": "total",
            "channel": "total",
            "case": t.case,
            "affected_users": null,
            "per_user": null,
            "computed": t.summed,
            "declared": t.declared,
            "consistent": t.consistent,
            "net_of_offset": t.net_of_offset,
            "flagged": flagged.contains(&id.as_str()),
        })));
    }
    let decomposed: Vec<_> = w
        .decomposition
        .par_iter()
        .map(|e| {
            let p = Stage1Problem { alpha: e.alpha, n_rivals: e.n_rivals, margin: e.margin };
            let s = stage1_joint_equilibrium(&p, &d.baseline, &d.solver)?;
            if !s.converged {
                return Ok((e, s, None));
            }
            let dec = welfare_decomposition(&s, &p, &d.baseline, &d.solver)?;
            Ok((e, s, Some(dec)))
        })
        .collect::<Result<_, CliError>>()?;
    let mut drows = Vec::new();
    for (e, s, dec) in decomposed {
        if dec.is_none() {
            ctx.flag(format!("welfare/{}", e.name));
        }
        let ordered = dec.map(|x| s.q_own_star > x.q_first_best && x.q_first_best > s.q_rival_star);
        let mut row = to_row(&json!({
            "name": e.name,
            "alpha": e.alpha,
            "n_rivals": e.n_rivals,
            "q_own_star": s.q_own_star,
            "q_rival_star": s.q_rival_star,
            "discriminates": s.discriminates,
            "first_best_between": ordered,
        }));
        row.extend(dec.map(|x| to_row(&x)).unwrap_or_default());
        drows.push(row);
    }
    ctx.extra.insert("inconsistent_cells".into(), json!(flagged));
    ctx.em.table("welfare_table", &rows)?;
    ctx.em.table("welfare_decomposition", &drows)
}

pub fn designation(ctx: &mut Ctx) -> Result<(), CliError> {
    let m = ctx.risk_mapping()?;
    let th = ctx.sc.doc.designation;
    let mut rows = Vec::new();
    for p in ctx.sc.profiles.firms.iter().filter(|p| ctx.selected(&p.name)) {
        let input = designation_input(p, m.row(&p.name));
        let a = designate(&input, &th)?;
        let mut row = to_row(&json!({
            "firm": a.name,
            "verdict": a.verdict,
            "monitor_pattern": a.monitor_pattern,
            "dependence": a.dependence,
            "integration": a.integration,
            "discrimination": a.discrimination,
            "lock_in": a.lock_in,
            "discrimination_by_gap": a.discrimination_by_gap,
            "discrimination_by_tier": a.discrimination_by_tier,
            "evidence_gap": a.evidence_gap,
        }));
        row.insert("input".into(), json!(input));
        row.insert("rationale".into(), json!(a.rationale));
        rows.push(row);
    }
    ctx.em.table("designate", &rows)
}

pub fn dynamic(ctx: &mut Ctx) -> Result<(), CliError> {
    let sc = ctx.sc;
    let d = &sc.doc;
    let entries: Vec<_> = d.dynamic.iter().filter(|e| ctx.entry_selected(&e.firm)).collect();
    let rows: Vec<Row> = entries
        .par_iter()
        .map(|e| {
            let market = DynamicMarket { alpha: sc.alpha_for(e.alpha, &e.firm), n_rivals: e.n_rivals };
            let c = entry_deterrence_check(&e.scenario, &market, &d.baseline, &d.solver)?;
            let mut row = to_row(&json!({ "name": e.name, "firm": e.firm, "alpha": market.alpha, "n_rivals": e.n_rivals }));
            row.insert("scenario".into(), json!(e.scenario));
            row.extend(to_row(&c));
            Ok(row)
        })
        .collect::<Result<_, CliError>>()?;
    ctx.em.table("dynamic", &rows)
}

pub fn routing(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for e in ctx.sc.doc.routing.iter().filter(|e| ctx.entry_selected(&e.firm)) {
        let b = optimal_routing_bias(&e.problem)?;
        let neutral = e.problem.objective(0.0)?;
        rows.push(to_row(&json!({
            "name": e.name,
            "firm": e.firm,
            "theta": e.problem.theta,
            "own_margin": e.problem.own_margin,
            "api_price": e.problem.api_price,
            "observability_cost": e.problem.observability_cost,
            "bias": b.bias,
            "objective": b.objective,
            "objective_at_zero": neutral,
            "flat": b.flat,
            "at_upper_bound": b.at_upper_bound,
            "own_route_share": b.outcome.shares[0],
            "shares": b.outcome.shares,
        })));
    }
    ctx.em.table("routing", &rows)
}

pub fn tier(ctx: &mut Ctx) -> Result<(), CliError> {
    let sc = ctx.sc;
    let d = &sc.doc;
    let t = d.tier.as_ref().ok_or_else(|| CliError::Validation("tier: section missing from scenario".into()))?;
    let entries: Vec<_> = t.policies.iter().filter(|e| ctx.entry_selected(&e.firm)).collect();
    let gains: Vec<Row> = entries
        .par_iter()
        .map(|e| {
            let qos = QosProfile::symmetric(e.q_own, e.q_rival, e.n_rivals)?;
            let market = TierMarket { alpha: sc.alpha_for(e.alpha, &e.firm), qos: qos.clone(), margin: e.margin };
            let policy = TierPolicy { tau: e.tau, kappa: e.kappa, prevention: e.prevention };
            policy.validate()?;
            let g = tier_foreclosure_gain(&market, &d.baseline, &policy, &d.solver)?;
            let eq = stage2_fixed_point(market.alpha, &qos, &d.baseline, &d.solver)?;
            let w = welfare_total(&eq, &qos, &d.baseline)?;
            let mut row = to_row(&json!({
                "name": e.name,
                "firm": e.firm,
                "alpha": market.alpha,
                "n_rivals": e.n_rivals,
                "tau": e.tau,
                "kappa": e.kappa,
                "tau_kappa": e.tau * e.kappa,
                "prevention_share": policy.prevention_share(),
            }));
            row.extend(to_row(&g));
            row.insert("market_welfare".into(), json!(w));
            row.insert("externality".into(), json!(e.externality));
            row.insert("safety_welfare".into(), json!(safety_welfare(w, e.externality, &policy)?));
            Ok(row)
        })
        .collect::<Result<_, CliError>>()?;
    let mut surface = Vec::new();
    if let Some(s) = &t.surface {
        if s.tau_points < 2 || !(s.tau_lo < s.tau_hi) {
            return Err(CliError::Validation("tier.surface: needs tau_lo < tau_hi and tau_points >= 2".into()));
        }
        let mut cells = Vec::new();
        for e in &entries {
            for &kappa in &s.kappas {
                for i in 0..s.tau_points {
                    let tau = s.tau_lo + (s.tau_hi - s.tau_lo) * i as f64 / (s.tau_points - 1) as f64;
                    cells.push((*e, tau, kappa));
                }
            }
        }
        surface = cells
            .par_iter()
            .map(|(e, tau, kappa)| {
                let qos = QosProfile::symmetric(e.q_own, e.q_rival, e.n_rivals)?;
                let market = TierMarket { alpha: sc.alpha_for(e.alpha, &e.firm), qos, margin: e.margin };
                let policy = TierPolicy { tau: *tau, kappa: *kappa, prevention: e.prevention };
                let g = tier_foreclosure_gain(&market, &d.baseline, &policy, &d.solver)?;
                Ok(to_row(&json!({
                    "name": e.name,
                    "tau": tau,
                    "kappa": kappa,
                    "gain": g.gain,
                    "partner_count": g.partner_count,
                    "in_gate": g.in_gate,
                    "clamped": g.clamped,
                })))
            })
            .collect::<Result<_, CliError>>()?;
    }
    ctx.em.table("tier_gain", &gains)?;
    ctx.em.table("tier_surface", &surface)
}

pub fn tolerance(ctx: &mut Ctx) -> Result<(), CliError> {
    let p = ctx
        .sc
        .doc
        .tolerance
        .ok_or_else(|| CliError::Validation("tolerance: section missing from scenario".into()))?;
    let s = optimal_tolerance(&p)?;
    let mut row = to_row(&p);
    row.extend(to_row(&s));
    let denom = 2.0 * (p.competition_curvature + p.innovation_curvature);
    row.insert(
        "closed_form".into(),
        json!(if denom > 0.0 { Some(p.innovation_slope / denom) } else { None }),
    );
    ctx.em.table("tolerance", &[row])
}

pub fn audit(ctx: &mut Ctx) -> Result<(), CliError> {
    let a = ctx
        .sc
        .doc
        .audit
        .as_ref()
        .ok_or_else(|| CliError::Validation("audit: section missing from scenario".into()))?;
    let has_config_seed = a.config.get("seed").is_some();
    let seed = match (ctx.seed_forced, ctx.seed, has_config_seed) {
        (true, Some(s), _) => s,
        (false, _, true) => a.config["seed"]
            .as_u64()
            .ok_or_else(|| CliError::Validation("audit.config.seed: expected an unsigned integer".into()))?,
        (_, Some(s), _) => s,
        _ => {
            return Err(CliError::Validation(
                "audit: no seed; pass --seed or set `seed` in the scenario".into(),
            ))
        }
    };
    ctx.em.meta.seed = Some(seed);
    let cfg: AuditConfig = a.resolved(seed, true)?;
    let data = generate(&cfg)?;
    let est = estimate(&data, a.epsilon, a.alpha_level)?;
    let mut row = to_row(&json!({
        "true_gap": cfg.true_gap,
        "noise_sd": cfg.noise_sd,
        "n_pairs": cfg.n_pairs(),
        "strata_count": cfg.strata.count(),
    }));
    let mut e = to_row(&est);
    let strata = e.remove("strata");
    e.remove("notes");
    row.extend(e);
    row.insert("notes".into(), json!(est.notes.join("; ")));
    ctx.em.table("audit_estimate", &[row])?;
    if let Some(Value::Array(st)) = strata {
        let rows: Vec<Row> = st.into_iter().filter_map(|v| v.as_object().cloned()).collect();
        ctx.em.table("audit_strata", &rows)?;
    }

    if let Some(p) = &a.power {
        let surf = power_analysis(&cfg, &p.gaps, &p.n_pairs, a.epsilon, a.alpha_level, p.replications)?;
        let rows: Vec<Row> = surf.cells.iter().map(to_row).collect();
        ctx.em.table("audit_power", &rows)?;
    }

    if let Some(b) = &a.bimodality {
        let reps: Vec<Row> = (0..b.replications)
            .into_par_iter()
            .map(|r| {
                let scores = simulate_benchmark_scores(&b.sim, seed, r)?;
                let rep = bimodality_detect(&scores, b.threshold)?;
                let mut row = to_row(&json!({ "replication": r, "tau": b.sim.tau, "kappa": b.sim.kappa }));
                row.extend(to_row(&rep));
                Ok(row)
            })
            .collect::<Result<_, CliError>>()?;
        let within = reps
            .iter()
            .filter(|r| r["implied_tau"].as_f64().is_some_and(|t| (t - b.sim.tau).abs() <= 0.05))
            .count();
        ctx.extra.insert(
            "bimodality".into(),
            json!({ "replications": b.replications, "implied_tau_within_0_05": within }),
        );
        ctx.em.table("audit_bimodality", &reps)?;
    }

    if !a.episodes.is_empty() {
        let outcomes: Vec<_> = a
            .episodes
            .par_iter()
            .map(|e| {
                let ec = EpisodeConfig {
                    audit: AuditConfig { true_gap: 0.0, ..cfg },
                    step: e.step,
                    shock: e.shock,
                    z_threshold: e.z_threshold,
                    min_effect: e.min_effect,
                };
                degradation_episode(&ec).map(|(_, r)| (e, r))
            })
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        let mut daily = Vec::new();
        for (e, r) in outcomes {
            rows.push(to_row(&json!({
                "name": e.name,
                "step": e.step,
                "shock": e.shock,
                "change_day": r.change_day,
                "differential_step": r.differential_step,
                "differential_step_se": r.differential_step_se,
                "differential_trend": r.differential_trend,
                "api_level_step": r.api_level_step,
                "attribution": r.attribution,
                "rationale": r.rationale,
            })));
            for dd in &r.daily {
                let mut row = to_row(&json!({ "name": e.name }));
                row.extend(to_row(dd));
                daily.push(row);
            }
        }
        ctx.em.table("audit_episodes", &rows)?;
        ctx.em.table("audit_episode_daily", &daily)?;
    }

    if a.emit_dataset {
        let rows: Vec<Row> = data.rows.iter().map(to_row).collect();
        ctx.em.table("audit_dataset", &rows)?;
    }
    Ok(())
}

/// Collects every data file already in the output directory into one JSON
/// document. Manifests and earlier reports are skipped.
pub fn report(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut names: Vec<String> = fs::read_dir(&ctx.em.dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| (n.ends_with(".csv") || n.ends_with(".json")) && !n.ends_with(".manifest.json") && !n.starts_with("report."))
        .collect();
    names.sort();
    let mut sources = Vec::new();
    for n in &names {
        let path = ctx.em.dir.join(n);
        let body = if n.ends_with(".csv") {
            let mut r = csv::Reader::from_path(&path)?;
            let headers = r.headers()?.clone();
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let obj: Map<String, Value> =
                    headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), Value::from(v))).collect();
                rows.push(Value::Object(obj));
            }
            Value::Array(rows)
        } else {
            serde_json::from_slice(&fs::read(&path)?)?
        };
        sources.push(json!({ "file": n, "content": body }));
    }
    ctx.em.document("report.json", json!({ "sources": sources }))
}
