//! Reputation engine.
//!
//! Each window produces a base reputation per oracle from three parts:
//! a reliability score (response frequency, success rate, deadline
//! efficiency), a behavior (harm) score and a token score. The final
//! reputation is a tanh-weighted sum over a fixed-length window buffer.
//!
//! In [`WindowMode::Improved`] the buffer stores the composite values
//! themselves, so a bad window keeps feeding every later window through the
//! recurrence
//!
//! ```text
//! R_k = tanh(chi) * base_k + sum_{a=2..min(k,W)} tanh(chi / a) * V_{k-a+1}
//! ```
//!
//! where `V_i` are previously stored composites. The recurrence is bounded
//! for a bounded base iff `sum_{a=2..W} tanh(chi / a) < 1`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BehaviorLevel, TrustConfig, WindowMode};

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("unknown oracle {0}")]
    UnknownOracle(usize),
    #[error("average response time must be positive (got {0})")]
    NonPositiveResponseTime(f64),
    #[error("window age must be at least 1 (got {0})")]
    InvalidAge(u32),
}

/// Weights and thresholds of the reputation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustWeights {
    pub frequency: f64,
    pub success: f64,
    pub efficiency: f64,
    pub reliability: f64,
    pub behavior: f64,
    pub token: f64,
    pub time: f64,
    pub harm_scores: [f64; 4],
    pub threshold: f64,
}

impl From<&TrustConfig> for TrustWeights {
    fn from(c: &TrustConfig) -> Self {
        Self {
            frequency: c.frequency_weight,
            success: c.success_weight,
            efficiency: c.efficiency_weight,
            reliability: c.reliability_weight,
            behavior: c.behavior_weight,
            token: c.token_weight,
            time: c.time_weight,
            harm_scores: c.harm_scores,
            threshold: c.threshold,
        }
    }
}

impl Default for TrustWeights {
    fn default() -> Self {
        Self::from(&TrustConfig::default())
    }
}

/// Per-level behavior counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorCounts(pub [u32; 4]);

impl BehaviorCounts {
    pub fn record(&mut self, level: BehaviorLevel) {
        self.0[level.index()] += 1;
    }

    pub fn get(&self, level: BehaviorLevel) -> u32 {
        self.0[level.index()]
    }

    pub fn with(mut self, level: BehaviorLevel, n: u32) -> Self {
        self.0[level.index()] = n;
        self
    }
}

/// One oracle's activity within the current window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleWindowStats {
    pub responses: u32,
    pub successes: u32,
    /// Sum of response times (finish - arrival), seconds.
    pub total_response_time: f64,
    pub behavior: BehaviorCounts,
    pub stake: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowStats {
    pub oracles: Vec<OracleWindowStats>,
}

impl WindowStats {
    pub fn new(stakes: &[f64]) -> Self {
        Self {
            oracles: stakes
                .iter()
                .map(|s| OracleWindowStats { stake: *s, ..Default::default() })
                .collect(),
        }
    }

    pub fn record(
        &mut self,
        oid: usize,
        response_time: f64,
        success: bool,
        behavior: BehaviorLevel,
    ) -> Result<(), TrustError> {
        let s = self.oracles.get_mut(oid).ok_or(TrustError::UnknownOracle(oid))?;
        s.responses += 1;
        s.successes += u32::from(success);
        s.total_response_time += response_time;
        s.behavior.record(behavior);
        Ok(())
    }

    /// Zero all counters, keeping stakes.
    pub fn reset(&mut self) {
        for s in &mut self.oracles {
            *s = OracleWindowStats { stake: s.stake, ..Default::default() };
        }
    }

    pub fn stakes(&self) -> Vec<f64> {
        self.oracles.iter().map(|s| s.stake).collect()
    }
}

/// `N_j * M / sum N`; zero when nobody responded.
pub fn relative_response_frequency(stats: &WindowStats, j: usize) -> Result<f64, TrustError> {
    let counts: Vec<f64> = stats.oracles.iter().map(|s| f64::from(s.responses)).collect();
    normalized_share(&counts, j)
}

fn normalized_share(values: &[f64], j: usize) -> Result<f64, TrustError> {
    let v = *values.get(j).ok_or(TrustError::UnknownOracle(j))?;
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(v * values.len() as f64 / total)
}

/// A request succeeds when it met its deadline and passed verification.
pub fn request_success(response_time: f64, ddl: f64, verified: bool) -> bool {
    response_time <= ddl && verified
}

pub fn success_rate(s: &OracleWindowStats) -> f64 {
    if s.responses == 0 {
        0.0
    } else {
        f64::from(s.successes) / f64::from(s.responses)
    }
}

/// Mean response time; an idle oracle reads exactly `ddl`, so its
/// efficiency term `ddl / ort` is 1.
pub fn average_response_time(s: &OracleWindowStats, ddl: f64) -> f64 {
    if s.responses == 0 {
        ddl
    } else {
        s.total_response_time / f64::from(s.responses)
    }
}

pub fn reliability_score(
    orf: f64,
    osr: f64,
    ort: f64,
    ddl: f64,
    w: &TrustWeights,
) -> Result<f64, TrustError> {
    if !(ort > 0.0) {
        return Err(TrustError::NonPositiveResponseTime(ort));
    }
    Ok(w.frequency * orf + w.success * osr + w.efficiency * (ddl / ort))
}

pub fn behavior_score(counts: &BehaviorCounts, w: &TrustWeights) -> f64 {
    BehaviorLevel::ALL
        .iter()
        .map(|l| w.harm_scores[l.index()] * f64::from(counts.get(*l)))
        .sum()
}

/// `Token_j * M / sum Token`; zero when nothing is staked.
pub fn token_score(stakes: &[f64], j: usize) -> Result<f64, TrustError> {
    normalized_share(stakes, j)
}

pub fn base_reputation(rel: f64, beh: f64, tok: f64, w: &TrustWeights) -> f64 {
    w.reliability * rel - w.behavior * beh + w.token * tok
}

/// `tanh(chi / age)` for a window `age` steps back (the current window has age 1).
pub fn time_factor(age: u32, chi: f64) -> Result<f64, TrustError> {
    if age < 1 {
        return Err(TrustError::InvalidAge(age));
    }
    Ok((chi / f64::from(age)).tanh())
}

/// `sum_{a=2..W} tanh(chi / a)`: the recurrence is stable iff this is < 1.
pub fn carry_coefficient_sum(length: usize, chi: f64) -> f64 {
    (2..=length).map(|a| (chi / a as f64).tanh()).sum()
}

pub fn is_trusted(reputation: f64, threshold: f64) -> bool {
    reputation >= threshold
}

/// Ring buffer of the last `length` stored window values, newest at the back.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationWindow {
    stored: VecDeque<f64>,
    length: usize,
    closed: u64,
    mode: WindowMode,
}

impl ReputationWindow {
    pub fn new(length: usize, mode: WindowMode) -> Self {
        assert!(length >= 1, "window length must be at least 1");
        Self { stored: VecDeque::with_capacity(length), length, closed: 0, mode }
    }

    /// Number of windows closed so far (k).
    pub fn closed(&self) -> u64 {
        self.closed
    }

    pub fn stored(&self) -> impl Iterator<Item = f64> + '_ {
        self.stored.iter().copied()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Close window k with base reputation `base` and return its final
    /// reputation.
    pub fn close(&mut self, base: f64, chi: f64) -> f64 {
        // newest stored entry has age 2 relative to the window being closed
        let history: f64 = self
            .stored
            .iter()
            .rev()
            .take(self.length - 1)
            .enumerate()
            .map(|(i, v)| (chi / (i + 2) as f64).tanh() * v)
            .sum();
        let value = chi.tanh() * base + history;
        if self.stored.len() == self.length {
            self.stored.pop_front();
        }
        self.stored.push_back(match self.mode {
            WindowMode::Improved => value,
            WindowMode::Standard => base,
        });
        self.closed += 1;
        value
    }
}

/// Every sub-score of one oracle for one closed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustBreakdown {
    pub window: u64,
    pub oid: usize,
    pub responses: u32,
    pub relative_frequency: f64,
    pub success_rate: f64,
    pub avg_response_time: f64,
    pub reliability: f64,
    pub behavior: f64,
    pub token: f64,
    pub base: f64,
    pub reputation: f64,
}

/// Reputation state of a whole community. Single writer; reads are cheap.
#[derive(Debug, Clone)]
pub struct TrustEngine {
    weights: TrustWeights,
    ddl: f64,
    windows: Vec<ReputationWindow>,
    current: Vec<f64>,
}

impl TrustEngine {
    pub fn new(
        oracles: usize,
        weights: TrustWeights,
        ddl: f64,
        length: usize,
        mode: WindowMode,
        initial_reputation: f64,
    ) -> Self {
        Self {
            weights,
            ddl,
            windows: (0..oracles).map(|_| ReputationWindow::new(length, mode)).collect(),
            current: vec![initial_reputation; oracles],
        }
    }

    pub fn weights(&self) -> &TrustWeights {
        &self.weights
    }

    /// Latest final reputation per oracle.
    pub fn reputations(&self) -> &[f64] {
        &self.current
    }

    pub fn reputation(&self, oid: usize) -> f64 {
        self.current[oid]
    }

    pub fn is_trusted(&self, oid: usize) -> bool {
        is_trusted(self.current[oid], self.weights.threshold)
    }

    pub fn windows_closed(&self) -> u64 {
        self.windows.first().map_or(0, |w| w.closed())
    }

    /// Score every oracle on `stats` and close one window for each.
    pub fn close_window(&mut self, stats: &WindowStats) -> Result<Vec<TrustBreakdown>, TrustError> {
        let w = self.weights;
        let stakes = stats.stakes();
        let mut rows = Vec::with_capacity(self.current.len());
        for (oid, s) in stats.oracles.iter().enumerate() {
            let rw = self.windows.get_mut(oid).ok_or(TrustError::UnknownOracle(oid))?;
            let orf = relative_response_frequency(stats, oid)?;
            let osr = success_rate(s);
            let ort = average_response_time(s, self.ddl);
            let rel = reliability_score(orf, osr, ort, self.ddl, &w)?;
            let beh = behavior_score(&s.behavior, &w);
            let tok = token_score(&stakes, oid)?;
            let base = base_reputation(rel, beh, tok, &w);
            let reputation = rw.close(base, w.time);
            self.current[oid] = reputation;
            rows.push(TrustBreakdown {
                window: rw.closed(),
                oid,
                responses: s.responses,
                relative_frequency: orf,
                success_rate: osr,
                avg_response_time: ort,
                reliability: rel,
                behavior: beh,
                token: tok,
                base,
                reputation,
            });
        }
        Ok(rows)
    }
}
