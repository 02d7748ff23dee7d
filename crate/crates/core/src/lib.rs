//! Reachability-based multi-vehicle collision avoidance with learned
//! initialization selection.

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod reachability;
pub mod safety_policy;
pub mod scenario_features;
pub mod simulator;

pub use error::{Error, Result};
