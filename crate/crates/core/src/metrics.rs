//! Run statistics and their on-disk form.
//!
//! A report directory holds:
//! - `summary.json`: scalar results ([`Summary`])
//! - `reputation.csv`: `window,o0..o{M-1}`, final reputation after each window
//! - `selection.csv`: `window,o0..o{M-1}`, requests served per window
//! - `convergence.csv`: `step,reward,cumulative_reward`
//!
//! [`export_log`] adds `records.csv` (one row per request) and `trust.csv`
//! (one row per window and oracle with every sub-score).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BehaviorClass, OracleProfile};
use crate::env::{EpisodeLog, ServiceRecord};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty log")]
    EmptyLog,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Per-class request counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub trusted: u64,
    pub benign: u64,
    pub malicious: u64,
}

impl ClassCounts {
    pub fn get(&self, class: BehaviorClass) -> u64 {
        match class {
            BehaviorClass::Trusted => self.trusted,
            BehaviorClass::Benign => self.benign,
            BehaviorClass::Malicious => self.malicious,
        }
    }

    fn bump(&mut self, class: BehaviorClass) {
        match class {
            BehaviorClass::Trusted => self.trusted += 1,
            BehaviorClass::Benign => self.benign += 1,
            BehaviorClass::Malicious => self.malicious += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.trusted + self.benign + self.malicious
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassFractions {
    pub trusted: f64,
    pub benign: f64,
    pub malicious: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: String,
    pub requests: u64,
    pub match_rate: f64,
    pub assignments: ClassCounts,
    pub fractions: ClassFractions,
    pub average_cost: f64,
    /// Mean of finish - arrival.
    pub average_response_time: f64,
    pub success_rate: f64,
    pub redirects: u64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: Summary,
    /// windows x oracles.
    pub reputation_trace: Vec<Vec<f64>>,
    /// windows x oracles.
    pub selection_trace: Vec<Vec<u32>>,
    /// Learning signal per step.
    pub rewards: Vec<f64>,
}

impl RunReport {
    pub fn cumulative_rewards(&self) -> Vec<f64> {
        self.rewards
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    /// Mean reward over steps `[from, to)`, clipped to the run length.
    pub fn mean_reward(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.rewards.len());
        let slice = &self.rewards[from.min(to)..to];
        slice.iter().sum::<f64>() / slice.len().max(1) as f64
    }
}

/// Pure function of the log: served-oracle classes come from `roster`.
pub fn aggregate(
    agent: &str,
    records: &[ServiceRecord],
    rewards: &[f64],
    roster: &[OracleProfile],
    reputation_trace: &[Vec<f64>],
    selection_trace: &[Vec<u32>],
) -> Result<RunReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let n = records.len() as f64;
    let mut assignments = ClassCounts::default();
    for r in records {
        assignments.bump(roster[r.oid].behavior_class);
    }
    let frac = |c: u64| c as f64 / n;
    let summary = Summary {
        agent: agent.to_string(),
        requests: records.len() as u64,
        match_rate: frac(records.iter().filter(|r| r.service_matched).count() as u64),
        fractions: ClassFractions {
            trusted: frac(assignments.trusted),
            benign: frac(assignments.benign),
            malicious: frac(assignments.malicious),
        },
        assignments,
        average_cost: records.iter().map(|r| r.cost).sum::<f64>() / n,
        average_response_time: records.iter().map(|r| r.response_time).sum::<f64>() / n,
        success_rate: frac(records.iter().filter(|r| r.success).count() as u64),
        redirects: records.iter().filter(|r| r.redirected).count() as u64,
        total_reward: rewards.iter().sum(),
    };
    Ok(RunReport {
        summary,
        reputation_trace: reputation_trace.to_vec(),
        selection_trace: selection_trace.to_vec(),
        rewards: rewards.to_vec(),
    })
}

pub fn aggregate_log(
    agent: &str,
    log: &EpisodeLog,
    roster: &[OracleProfile],
) -> Result<RunReport, MetricsError> {
    aggregate(agent, &log.records, &log.rewards, roster, &log.reputation_trace, &log.selection_trace)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> MetricsError + '_ {
    move |source| MetricsError::Csv { path: path.to_path_buf(), source }
}

fn write_matrix<T: ToString>(path: &Path, rows: &[Vec<T>], oracles: usize) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["window".to_string()];
    header.extend((0..oracles).map(|j| format!("o{j}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(T::to_string));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_matrix<T: std::str::FromStr>(path: &Path) -> Result<Vec<Vec<T>>, MetricsError>
where
    T::Err: std::fmt::Display,
{
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<T>())
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| MetricsError::Format { path: path.to_path_buf(), message: e.to_string() })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Write `summary.json`, `reputation.csv`, `selection.csv` and
/// `convergence.csv` into `dir` (created if missing).
pub fn export_report(report: &RunReport, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report.summary)
        .map_err(|source| MetricsError::Json { path: path.clone(), source })?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;

    let m = report
        .reputation_trace
        .first()
        .map(Vec::len)
        .or_else(|| report.selection_trace.first().map(Vec::len))
        .unwrap_or(0);
    write_matrix(&dir.join("reputation.csv"), &report.reputation_trace, m)?;
    write_matrix(&dir.join("selection.csv"), &report.selection_trace, m)?;

    let path = dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["step", "reward", "cumulative_reward"]).map_err(csv_err(&path))?;
    for (i, (r, c)) in report.rewards.iter().zip(report.cumulative_rewards()).enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string(), c.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn import_report(dir: &Path) -> Result<RunReport, MetricsError> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let summary = serde_json::from_str(&text).map_err(|source| MetricsError::Json { path, source })?;
    let reputation_trace = read_matrix(&dir.join("reputation.csv"))?;
    let selection_trace = read_matrix(&dir.join("selection.csv"))?;
    let rewards = read_matrix::<f64>(&dir.join("convergence.csv"))?
        .into_iter()
        .map(|row| row[0])
        .collect();
    Ok(RunReport { summary, reputation_trace, selection_trace, rewards })
}

/// Write `records.csv` and `trust.csv` for a finished episode.
pub fn export_log(log: &EpisodeLog, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("records.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for r in &log.records {
        w.serialize(r).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("trust.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    for row in &log.trust_rows {
        w.serialize(row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}
