//! Provenance-tagged firm profiles, the comparative risk map and its
//! sensitivity sweeps.

pub mod profiles;
pub mod riskmap;
pub mod sweep;

pub use profiles::{load_profiles, parse_profiles, FirmProfile, ProfileSet, Provenance, SourceRecord, Tagged, Treatment};
pub use riskmap::{designation_input, fit_margin_scale, risk_map, LabelThresholds, RiskBand, RiskMapping, RiskRow, RiskSettings};
pub use sweep::{sensitivity_sweep, SweepParam, SweepReport, SweepSpec};
