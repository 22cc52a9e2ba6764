use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use serde_json::Value;

use super::run;

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scenario.json")
}

/// Shipped scenario with a lighter audit section, written next to a copy of
/// the profiles so the relative path resolves.
fn light_scenario(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    fs::copy(data.join("profiles.json"), dir.join("profiles.json")).unwrap();
    let mut v: Value = serde_json::from_str(&fs::read_to_string(shipped()).unwrap()).unwrap();
    v["audit"]["power"]["replications"] = 20.into();
    v["audit"]["bimodality"]["replications"] = 50.into();
    v["calibration"]["sweep"] = serde_json::json!([
        { "parameter": "alpha", "lo": 0.5, "hi": 0.9, "points": 3 },
        { "parameter": "eta", "lo": 0.2, "hi": 0.8, "points": 2 }
    ]);
    edit(&mut v);
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    p
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("foreclosure-lab").chain(args.iter().copied()))
}

fn run_in(sub: &str, scenario: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut a = vec![sub, "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    a.extend_from_slice(extra);
    cli(&a)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(cli(&["frobnicate"]), 1);
    assert_eq!(cli(&["gap", "--no-such-flag"]), 1);
    assert_eq!(cli(&["gap"]), 1);
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["--version"]), 0);
    assert_eq!(cli(&["gap", "--scenario", "/nonexistent/scenario.json"]), 1);
}

#[test]
fn gap_for_one_firm_is_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let out = dir.path().join("out");
    assert_eq!(run_in("gap", &sc, &out, &["--firm", "google"]), 0);
    let mut r = csv::Reader::from_path(out.join("gap.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert_eq!(&headers[0], "artifact_version");
    assert_eq!(&headers[1], "scenario_hash");
    assert_eq!(&headers[2], "seed");
    for col in ["q_own_star", "q_rival_star", "gap", "bracket", "discriminates"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let gap: f64 = rows[0][headers.iter().position(|h| h == "gap").unwrap()].parse().unwrap();
    assert!((gap - 0.27).abs() < 1e-6);
    assert!(out.join("gap.manifest.json").exists());
}

#[test]
fn unknown_firm_and_unresolved_reference_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    assert_eq!(run_in("gap", &sc, &dir.path().join("o1"), &["--firm", "nobody"]), 1);
    let bad = light_scenario(dir.path(), |v| v["tier"]["policies"][0]["firm"] = "nobody".into());
    assert_eq!(run_in("tier", &bad, &dir.path().join("o2"), &[]), 1);
}

#[test]
fn firm_without_gap_solve_is_rejected_by_gap() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    assert_eq!(run_in("gap", &sc, &dir.path().join("o"), &["--firm", "anthropic_cyber"]), 1);
}

#[test]
fn audit_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |v| {
        v.as_object_mut().unwrap().remove("seed");
    });
    assert_eq!(run_in("audit", &sc, &dir.path().join("o1"), &[]), 1);
    assert_eq!(run_in("audit", &sc, &dir.path().join("o2"), &["--seed", "42"]), 0);
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_in("audit", &sc, &a, &["--seed", "1"]), 0);
    assert_eq!(run_in("audit", &sc, &b, &["--seed", "2"]), 0);
    assert_ne!(fs::read(a.join("audit_estimate.csv")).unwrap(), fs::read(b.join("audit_estimate.csv")).unwrap());
}

#[test]
fn solver_non_convergence_exits_two_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |v| v["solver"] = serde_json::json!({ "outer_max_iter": 2 }));
    let out = dir.path().join("o");
    assert_eq!(run_in("solve", &sc, &out, &[]), 2);
    assert!(out.join("solve.csv").exists());
    let m: Value = serde_json::from_slice(&fs::read(out.join("solve.manifest.json")).unwrap()).unwrap();
    assert!(!m["non_converged"].as_array().unwrap().is_empty());
}

#[test]
fn schema_errors_name_the_document_path() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |v| v["baseline"]["gamma"] = "steep".into());
    let err = crate::scenario::Scenario::load(&sc).err().unwrap();
    assert!(err.to_string().contains("baseline.gamma"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn scenario_file_is_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let before = fs::read(&sc).unwrap();
    assert_eq!(run_in("riskmap", &sc, &dir.path().join("o"), &[]), 0);
    assert_eq!(fs::read(&sc).unwrap(), before);
}

#[test]
fn json_format_wraps_rows_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let out = dir.path().join("o");
    assert_eq!(run_in("tolerance", &sc, &out, &["--format", "json"]), 0);
    let v: Value = serde_json::from_slice(&fs::read(out.join("tolerance.json")).unwrap()).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["metadata", "rows"]);
    assert!((v["rows"][0]["epsilon_star"].as_f64().unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn every_subcommand_is_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let subs = [
        "solve", "gap", "sweep", "riskmap", "welfare", "designate", "dynamic", "routing", "tier", "tolerance", "audit",
        "report",
    ];
    let mut outputs = Vec::new();
    for jobs in ["1", "3", "3"] {
        let out = dir.path().join(format!("out_{jobs}_{}", outputs.len()));
        for s in subs {
            assert_eq!(run_in(s, &sc, &out, &["--jobs", jobs]), 0, "{s}");
        }
        outputs.push(read_dir_sorted(&out));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn report_gathers_existing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = light_scenario(dir.path(), |_| {});
    let out = dir.path().join("o");
    assert_eq!(run_in("tolerance", &sc, &out, &[]), 0);
    assert_eq!(run_in("routing", &sc, &out, &[]), 0);
    assert_eq!(run_in("report", &sc, &out, &[]), 0);
    let v: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let files: Vec<&str> = v["sources"].as_array().unwrap().iter().map(|s| s["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["routing.csv", "tolerance.csv"]);
    assert!(v["metadata"]["scenario_hash"].is_string());
}

fn malformed(text: &str, kind: u8, pos: usize) -> String {
    let mut v: Value = serde_json::from_str(text).unwrap();
    match kind % 4 {
        0 => text[..pos % text.len()].to_string(),
        1 => {
            v.as_object_mut().unwrap().insert(format!("unexpected_{pos}"), Value::from(pos));
            v.to_string()
        }
        2 => {
            let keys = ["schema_version", "as_of", "baseline", "profiles", "calibration"];
            v.as_object_mut().unwrap().remove(keys[pos % keys.len()]);
            v.to_string()
        }
        _ => {
            let fields = ["gamma", "eta", "p_api", "k", "rho0"];
            v["baseline"][fields[pos % fields.len()]] = Value::from(-(pos as f64) - 1.0);
            v.to_string()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn malformed_scenarios_exit_one(kind in 0u8..4, pos in 0usize..100_000) {
        let dir = tempfile::tempdir().unwrap();
        let sc = light_scenario(dir.path(), |_| {});
        let text = fs::read_to_string(&sc).unwrap();
        fs::write(&sc, malformed(&text, kind, pos)).unwrap();
        prop_assert_eq!(run_in("tolerance", &sc, &dir.path().join("o"), &[]), 1);
    }
}
