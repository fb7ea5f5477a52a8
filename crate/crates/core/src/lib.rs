//! Trust-aware, cost-optimized selection of blockchain oracles.
//!
//! The crate simulates an oracle community serving a stream of data
//! requests, scores every oracle with a multi-dimensional reputation model
//! over a sliding window, and selects oracles with a deep Q-network or one
//! of three baselines (round-robin, Thompson-sampling bandit, semi-greedy).

pub mod agents;
pub mod attacks;
pub mod domain;
pub mod env;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod trust;

pub use domain::{
    validate_scenario, BehaviorClass, BehaviorLevel, DataRequest, OracleProfile, ScenarioConfig,
    ScenarioError,
};
