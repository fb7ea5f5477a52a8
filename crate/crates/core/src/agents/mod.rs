//! Oracle selectors: the DQN agent and three baselines.

mod baselines;
mod dqn;
mod replay;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{psg_predict_positive, Blor, BlorState, Psg, RoundRobin};
pub use dqn::{argmax, DqnAgent};
pub use replay::{ReplayMemory, Transition};

use crate::domain::ScenarioConfig;
use crate::env::{EnvState, StepOutcome};
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("non-finite loss {loss} at learn step {learn_step}")]
    NonFiniteLoss { learn_step: u64, loss: f64 },
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Picks an oracle for each request and optionally learns from outcomes.
pub trait Selector {
    fn name(&self) -> &'static str;

    fn select(&mut self, state: &EnvState) -> Result<usize, AgentError>;

    /// Feedback after `action` was dispatched in `state`.
    fn observe(
        &mut self,
        _state: &EnvState,
        _action: usize,
        _outcome: &StepOutcome,
    ) -> Result<(), AgentError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    TcoDrl,
    RoundRobin,
    Blor,
    Psg,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] =
        [AgentKind::TcoDrl, AgentKind::RoundRobin, AgentKind::Blor, AgentKind::Psg];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::TcoDrl => "tco-drl",
            AgentKind::RoundRobin => "round-robin",
            AgentKind::Blor => "blor",
            AgentKind::Psg => "psg",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown agent `{s}`"))
    }
}

/// A baseline selector for `kind`. The DQN agent needs training and is
/// built separately.
pub fn baseline(kind: AgentKind, cfg: &ScenarioConfig, seed: u64) -> Option<Box<dyn Selector>> {
    match kind {
        AgentKind::TcoDrl => None,
        AgentKind::RoundRobin => Some(Box::new(RoundRobin::new())),
        AgentKind::Blor => Some(Box::new(Blor::new(cfg.oracle_count(), seed))),
        AgentKind::Psg => Some(Box::new(Psg::new(cfg.psg.q, cfg.reward.clone(), seed))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("dqn".parse::<AgentKind>().is_err());
    }
}
