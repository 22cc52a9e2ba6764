//! Scenario document: one JSON file drives every subcommand.

use std::path::{Path, PathBuf};

use foreclosure_core::audit::episode::{CapacityShock, StepDegradation};
use foreclosure_core::audit::{AuditConfig, BenchmarkSim};
use foreclosure_core::calibration::{parse_profiles, LabelThresholds, ProfileSet, SweepSpec};
use foreclosure_core::extensions::dynamic::DynamicScenario;
use foreclosure_core::extensions::routing::RoutingProblem;
use foreclosure_core::extensions::tier::PreventionCurve;
use foreclosure_core::model::{BaselineParams, MarginRule};
use foreclosure_core::welfare::{DesignationThresholds, ToleranceProblem, WelfareTableSpec};
use foreclosure_core::SolverConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginFitDecl {
    pub firm: String,
    pub target_gap: f64,
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginScaleDecl {
    pub value: f64,
    pub provenance: String,
    #[serde(default)]
    pub fit: Option<MarginFitDecl>,
}

fn default_eta_band() -> [f64; 2] {
    [0.2, 0.8]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub margin_scale: MarginScaleDecl,
    #[serde(default)]
    pub thresholds: LabelThresholds,
    #[serde(default)]
    pub sweep: Vec<SweepSpec>,
    #[serde(default = "default_eta_band")]
    pub eta_band: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveEntry {
    pub name: String,
    pub alpha: f64,
    pub n_rivals: usize,
    pub margin: MarginRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionEntry {
    pub name: String,
    pub alpha: f64,
    pub n_rivals: usize,
    #[serde(default = "stage_two")]
    pub margin: MarginRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareSection {
    pub table: WelfareTableSpec,
    #[serde(default)]
    pub decomposition: Vec<DecompositionEntry>,
}

fn stage_two() -> MarginRule {
    MarginRule::StageTwoMarkup
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierEntry {
    pub name: String,
    #[serde(default)]
    pub firm: Option<String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub n_rivals: usize,
    pub q_own: f64,
    pub q_rival: f64,
    #[serde(default = "stage_two")]
    pub margin: MarginRule,
    pub tau: f64,
    pub kappa: f64,
    #[serde(default)]
    pub prevention: PreventionCurve,
    #[serde(default)]
    pub externality: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSurface {
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub tau_points: usize,
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierSection {
    pub policies: Vec<TierEntry>,
    #[serde(default)]
    pub surface: Option<TierSurface>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicEntry {
    pub name: String,
    #[serde(default)]
    pub firm: Option<String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub n_rivals: usize,
    pub scenario: DynamicScenario,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingEntry {
    pub name: String,
    #[serde(default)]
    pub firm: Option<String>,
    pub problem: RoutingProblem,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub gaps: Vec<f64>,
    pub n_pairs: Vec<usize>,
    pub replications: u64,
}

fn default_threshold() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BimodalitySpec {
    pub sim: BenchmarkSim,
    pub replications: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_z() -> f64 {
    4.0
}

fn default_min_effect() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeEntry {
    pub name: String,
    #[serde(default)]
    pub step: Option<StepDegradation>,
    #[serde(default)]
    pub shock: Option<CapacityShock>,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_min_effect")]
    pub min_effect: f64,
}

fn default_alpha_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    /// Audit design; `seed` may be omitted and is then resolved at run time.
    pub config: Value,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_alpha_level")]
    pub alpha_level: f64,
    #[serde(default)]
    pub power: Option<PowerSpec>,
    #[serde(default)]
    pub bimodality: Option<BimodalitySpec>,
    #[serde(default)]
    pub episodes: Vec<EpisodeEntry>,
    #[serde(default)]
    pub emit_dataset: bool,
}

impl AuditSection {
    pub fn resolved(&self, seed: u64, seed_forced: bool) -> Result<AuditConfig, CliError> {
        let mut v = self.config.clone();
        let obj = v
            .as_object_mut()
            .ok_or_else(|| CliError::Validation("audit.config: expected an object".into()))?;
        if seed_forced || !obj.contains_key("seed") {
            obj.insert("seed".into(), Value::from(seed));
        }
        let cfg: AuditConfig = serde_path_to_error::deserialize(v)
            .map_err(|e| CliError::Validation(format!("audit.config.{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema_version: u32,
    pub as_of: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub baseline: BaselineParams,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Either `{"path": "..."}` relative to the scenario file, or an inline
    /// profile document.
    pub profiles: Value,
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub designation: DesignationThresholds,
    #[serde(default)]
    pub solve: Vec<SolveEntry>,
    #[serde(default)]
    pub welfare: Option<WelfareSection>,
    #[serde(default)]
    pub tier: Option<TierSection>,
    #[serde(default)]
    pub dynamic: Vec<DynamicEntry>,
    #[serde(default)]
    pub routing: Vec<RoutingEntry>,
    #[serde(default)]
    pub tolerance: Option<ToleranceProblem>,
    #[serde(default)]
    pub audit: Option<AuditSection>,
}

pub struct Scenario {
    pub doc: ScenarioDoc,
    pub profiles: ProfileSet,
    pub hash: String,
    pub path: PathBuf,
}

pub const SCHEMA_VERSION: u32 = 1;

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        let doc: ScenarioDoc = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version: expected {SCHEMA_VERSION}, found {}",
                doc.schema_version
            )));
        }
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let profiles = match doc.profiles.as_object() {
            Some(obj) if obj.len() == 1 && obj.contains_key("path") => {
                let rel = obj["path"]
                    .as_str()
                    .ok_or_else(|| CliError::Validation("profiles.path: expected a string".into()))?;
                let full = path.parent().unwrap_or(Path::new(".")).join(rel);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", full.display())))?;
                hasher.update(text.as_bytes());
                parse_profiles(&text, &full.display().to_string())?
            }
            _ => parse_profiles(&doc.profiles.to_string(), "profiles")?,
        };
        let s = Scenario {
            doc,
            profiles,
            hash: hex::encode(hasher.finalize()),
            path: path.to_path_buf(),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let d = &self.doc;
        d.baseline.validate()?;
        d.solver.validate()?;
        let known = |firm: &Option<String>, at: String| -> Result<(), CliError> {
            match firm {
                Some(f) if self.profiles.firm(f).is_none() => {
                    Err(CliError::Validation(format!("{at}.firm: unknown firm `{f}`")))
                }
                _ => Ok(()),
            }
        };
        let ms = &d.calibration.margin_scale;
        if !(ms.value > 0.0 && ms.value.is_finite()) {
            return Err(CliError::Validation("calibration.margin_scale.value: must be finite and > 0".into()));
        }
        if let Some(fit) = &ms.fit {
            known(&Some(fit.firm.clone()), "calibration.margin_scale.fit".into())?;
        }
        for s in &d.calibration.sweep {
            s.validate()?;
        }
        for (i, t) in d.tier.iter().flat_map(|t| t.policies.iter()).enumerate() {
            known(&t.firm, format!("tier.policies[{i}]"))?;
            if t.alpha.is_none() && t.firm.is_none() {
                return Err(CliError::Validation(format!("tier.policies[{i}]: needs `alpha` or `firm`")));
            }
        }
        for (i, e) in d.dynamic.iter().enumerate() {
            known(&e.firm, format!("dynamic[{i}]"))?;
            if e.alpha.is_none() && e.firm.is_none() {
                return Err(CliError::Validation(format!("dynamic[{i}]: needs `alpha` or `firm`")));
            }
            e.scenario.validate()?;
        }
        for (i, r) in d.routing.iter().enumerate() {
            known(&r.firm, format!("routing[{i}]"))?;
        }
        if let Some(a) = &d.audit {
            a.resolved(d.seed.unwrap_or(0), false)?;
        }
        Ok(())
    }

    /// Alpha for an entry that may defer to a firm profile.
    pub fn alpha_for(&self, alpha: Option<f64>, firm: &Option<String>) -> f64 {
        alpha
            .or_else(|| firm.as_ref().and_then(|f| self.profiles.firm(f)).map(|p| p.alpha.value))
            .expect("validated: alpha or firm present")
    }
}
