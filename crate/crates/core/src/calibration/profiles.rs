use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::welfare::Pillar4Flags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Inferred,
    Judgment,
}

/// A calibration input together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tagged<T> {
    pub value: T,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Primary,
    Secondary,
    Analytics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRecord {
    pub id: String,
    pub firm: String,
    pub variable: String,
    pub reported_value: String,
    pub source_type: SourceType,
    pub source: String,
    pub date: String,
    pub mapping: String,
}

/// How a profile enters the risk map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    /// Solve the Stage-1 equilibrium and label by the gap.
    GapSolve,
    /// Solve and report the gap, but label as a watch item.
    Watch,
    /// Label by the tier product `tau * kappa`.
    TierGated,
    /// No solve; report structural versus realized integration.
    StructuralOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmProfile {
    pub name: String,
    pub display_name: String,
    pub provider: String,
    pub submarket: String,
    pub treatment: Treatment,
    pub as_of: String,
    pub alpha: Tagged<f64>,
    pub lambda: Tagged<f64>,
    #[serde(default)]
    pub switching_cost: Option<Tagged<f64>>,
    #[serde(default)]
    pub margin: Option<Tagged<f64>>,
    #[serde(default)]
    pub n_rivals: Option<Tagged<usize>>,
    #[serde(default)]
    pub tau: Option<Tagged<f64>>,
    #[serde(default)]
    pub tau_range: Option<Tagged<[f64; 2]>>,
    #[serde(default)]
    pub kappa: Option<Tagged<f64>>,
    #[serde(default)]
    pub realized_routing_bias: Option<Tagged<[f64; 2]>>,
    #[serde(default)]
    pub pillar4: Option<Tagged<Pillar4Flags>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<String>,
    #[serde(default)]
    pub firms: Vec<FirmProfile>,
    #[serde(default)]
    pub sources: Vec<SourceRecord>,
}

impl ProfileSet {
    pub fn firm(&self, name: &str) -> Option<&FirmProfile> {
        self.firms.iter().find(|f| f.name == name)
    }

    /// Range checks, provenance completeness and source integrity.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, s) in self.sources.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("sources[{i}].id"), format!("duplicate id `{}`", s.id)));
            }
        }
        let mut names = HashSet::new();
        for (i, f) in self.firms.iter().enumerate() {
            let at = |field: &str| format!("firms[{i}].{field}");
            if !names.insert(f.name.as_str()) {
                return Err(Error::invalid(at("name"), format!("duplicate firm `{}`", f.name)));
            }
            let fields = field_refs(f);
            for (field, prov, sources) in &fields {
                if matches!(prov, Provenance::Observed | Provenance::Inferred) && sources.is_empty() {
                    return Err(Error::invalid(at(field), "observed or inferred value needs at least one source"));
                }
                if let Some(missing) = sources.iter().find(|s| !ids.contains(s.as_str())) {
                    return Err(Error::invalid(at(field), format!("dangling source link `{missing}`")));
                }
            }
            let unit = |field: &str, v: f64| {
                if (0.0..=1.0).contains(&v) {
                    Ok(())
                } else {
                    Err(Error::invalid(at(field), format!("{v} outside [0, 1]")))
                }
            };
            if !(f.alpha.value > 0.0 && f.alpha.value <= 1.0) {
                return Err(Error::invalid(at("alpha.value"), format!("{} outside (0, 1]", f.alpha.value)));
            }
            unit("lambda.value", f.lambda.value)?;
            if let Some(s) = &f.switching_cost {
                unit("switching_cost.value", s.value)?;
            }
            if let Some(k) = &f.kappa {
                unit("kappa.value", k.value)?;
            }
            if let Some(t) = &f.tau {
                if !(t.value >= 0.0 && t.value.is_finite()) {
                    return Err(Error::invalid(at("tau.value"), "must be finite and >= 0"));
                }
            }
            for (field, r) in [("tau_range.value", &f.tau_range), ("realized_routing_bias.value", &f.realized_routing_bias)] {
                if let Some(r) = r {
                    if !(r.value[0] >= 0.0 && r.value[0] <= r.value[1] && r.value[1].is_finite()) {
                        return Err(Error::invalid(at(field), "needs 0 <= lo <= hi"));
                    }
                }
            }
            if let Some(m) = &f.margin {
                if !(m.value >= 0.0 && m.value.is_finite()) {
                    return Err(Error::invalid(at("margin.value"), "must be finite and >= 0"));
                }
            }
            if let Some(n) = &f.n_rivals {
                if n.value == 0 {
                    return Err(Error::invalid(at("n_rivals.value"), "must be at least 1"));
                }
            }
            match f.treatment {
                Treatment::GapSolve | Treatment::Watch => {
                    if f.margin.is_none() || f.n_rivals.is_none() {
                        return Err(Error::invalid(at("treatment"), "gap solves need `margin` and `n_rivals`"));
                    }
                }
                Treatment::TierGated => {
                    if f.tau.is_none() || f.kappa.is_none() {
                        return Err(Error::invalid(at("treatment"), "tier rows need `tau` and `kappa`"));
                    }
                }
                Treatment::StructuralOnly => {}
            }
        }
        Ok(())
    }
}

fn field_refs(f: &FirmProfile) -> Vec<(&'static str, Provenance, &[String])> {
    let mut out: Vec<(&'static str, Provenance, &[String])> = vec![
        ("alpha", f.alpha.provenance, &f.alpha.sources),
        ("lambda", f.lambda.provenance, &f.lambda.sources),
    ];
    macro_rules! opt {
        ($name:literal, $field:expr) => {
            if let Some(t) = &$field {
                out.push(($name, t.provenance, &t.sources));
            }
        };
    }
    opt!("switching_cost", f.switching_cost);
    opt!("margin", f.margin);
    opt!("n_rivals", f.n_rivals);
    opt!("tau", f.tau);
    opt!("tau_range", f.tau_range);
    opt!("kappa", f.kappa);
    opt!("realized_routing_bias", f.realized_routing_bias);
    opt!("pillar4", f.pillar4);
    out
}

/// Parses and validates a profile document. Blank input yields an empty set.
pub fn parse_profiles(text: &str, origin: &str) -> Result<ProfileSet> {
    if text.trim().is_empty() {
        return Ok(ProfileSet::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let set: ProfileSet = serde_path_to_error::deserialize(de).map_err(|e| Error::Load {
        path: origin.to_string(),
        reason: format!("{}: {}", e.path(), e.inner()),
    })?;
    set.validate().map_err(|e| Error::Load {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    Ok(set)
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_profiles(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "firms": [{
            "name": "x", "display_name": "X", "provider": "X", "submarket": "general",
            "treatment": "gap_solve", "as_of": "2026-04",
            "alpha": {"value": 0.8, "provenance": "judgment"},
            "lambda": {"value": 0.5, "provenance": "inferred", "sources": ["s1"]},
            "margin": {"value": 0.4, "provenance": "judgment"},
            "n_rivals": {"value": 20, "provenance": "judgment"}
        }],
        "sources": [{"id": "s1", "firm": "X", "variable": "v", "reported_value": "1",
                     "source_type": "primary", "source": "r", "date": "2026", "mapping": "m"}]
    }"#;

    #[test]
    fn minimal_document_loads() {
        let set = parse_profiles(MINIMAL, "mem").unwrap();
        assert_eq!(set.firms.len(), 1);
        assert_eq!(set.firms[0].alpha.value, 0.8);
    }

    #[test]
    fn empty_document_is_empty() {
        let set = parse_profiles("  \n", "mem").unwrap();
        assert!(set.firms.is_empty() && set.sources.is_empty());
    }

    #[test]
    fn missing_provenance_names_the_field() {
        let bad = MINIMAL.replace(r#""alpha": {"value": 0.8, "provenance": "judgment"}"#, r#""alpha": {"value": 0.8}"#);
        let err = parse_profiles(&bad, "mem").unwrap_err().to_string();
        assert!(err.contains("firms[0].alpha"), "{err}");
        assert!(err.contains("provenance"), "{err}");
    }

    #[test]
    fn dangling_source_is_rejected() {
        let bad = MINIMAL.replace(r#""sources": ["s1"]"#, r#""sources": ["nope"]"#);
        let err = parse_profiles(&bad, "mem").unwrap_err().to_string();
        assert!(err.contains("dangling"), "{err}");
    }

    #[test]
    fn inferred_without_source_is_rejected() {
        let bad = MINIMAL.replace(r#", "sources": ["s1"]"#, "");
        assert!(parse_profiles(&bad, "mem").is_err());
    }
}
