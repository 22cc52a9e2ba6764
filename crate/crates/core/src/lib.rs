//! Equilibrium solvers and policy tooling for QoS foreclosure by a vertically
//! integrated inference provider.
//!
//! The provider `U` sells inference to `N` symmetric downstream rivals and runs
//! its own downstream application. Firm index `0` is always `U`; indices
//! `1..=N` are rivals.

pub mod audit;
pub mod calibration;
pub mod config;
pub mod error;
pub mod extensions;
pub mod foreclosure;
pub mod model;
pub mod roots;
pub mod welfare;

pub use config::SolverConfig;
pub use error::{Error, Result};
pub use model::{BaselineParams, MarginRule, QosProfile, Stage2Equilibrium, UpstreamProfit};
