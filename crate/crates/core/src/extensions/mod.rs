//! Two-period foreclosure, assistant routing bias, and tier gating.

pub mod dynamic;
pub mod routing;
pub mod tier;

pub use dynamic::{entry_deterrence_check, period2_degradation, DynamicScenario};
pub use routing::{optimal_routing_bias, route, RoutingOutcome, RoutingProblem};
pub use tier::{safety_welfare, tier_effective_qualities, tier_foreclosure_gain, TierPolicy};
