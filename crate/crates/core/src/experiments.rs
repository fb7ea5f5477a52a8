//! Episode driver, DQN training and the canned experiments behind the CLI.

use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{baseline, AgentError, AgentKind, DqnAgent, RoundRobin, Selector};
use crate::attacks::{AttackKind, AttackPolicy};
use crate::domain::{BehaviorClass, BehaviorDistribution, ScenarioConfig, WindowMode};
use crate::env::{derive_seed, EnvError, EpisodeLog, OracleEnv};
use crate::metrics::{aggregate_log, export_log, export_report, MetricsError, RunReport};
use crate::nn::{Mlp, NnError};
use crate::trust::{ReputationWindow, TrustError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Drive `selector` through every request of `env`.
pub fn run_episode(env: &mut OracleEnv, selector: &mut dyn Selector) -> Result<()> {
    while !env.is_done() {
        let state = env.observe()?;
        let action = selector.select(&state)?;
        let outcome = env.step(action)?;
        selector.observe(&state, action, &outcome)?;
    }
    Ok(())
}

/// Result of one agent on one scenario.
#[derive(Debug, Clone)]
pub struct AgentRun {
    pub kind: AgentKind,
    pub report: RunReport,
    pub log: EpisodeLog,
    /// DQN only: first training episode, learning from scratch.
    pub cold_start: Option<RunReport>,
    /// DQN only: greedy evaluation of the trained network without learning.
    pub frozen: Option<RunReport>,
}

/// Output of [`train_dqn`].
pub struct Training {
    pub agent: DqnAgent,
    /// One report per training episode, in order.
    pub episodes: Vec<RunReport>,
}

/// Seed of training episode `ep`, distinct from the evaluation stream.
pub fn training_seed(seed: u64, ep: usize) -> u64 {
    derive_seed(seed, 1000 + ep as u64)
}

/// Online training: episode 0 runs on the evaluation request stream
/// itself, later episodes on fresh streams. Replay and weights carry over;
/// exploration restarts from `restart_epsilon` in every later episode.
pub fn train_dqn(cfg: &ScenarioConfig, seed: u64, episodes: usize) -> Result<Training> {
    let probe = OracleEnv::new(cfg.clone(), seed)?;
    let mut agent =
        DqnAgent::new(&cfg.dqn, probe.state_len(), cfg.oracle_count(), derive_seed(seed, 3));
    let mut reports = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let env_seed = if ep == 0 { seed } else { training_seed(seed, ep) };
        if ep > 0 {
            agent.reset_epsilon(cfg.dqn.restart_epsilon);
        }
        let mut env = OracleEnv::new(cfg.clone(), env_seed)?;
        run_episode(&mut env, &mut agent)?;
        reports.push(aggregate_log("tco-drl", env.log(), &cfg.oracles)?);
    }
    agent.set_training(false);
    Ok(Training { agent, episodes: reports })
}

/// Greedy evaluation of a trained network on the scenario's request stream.
pub fn evaluate_network(cfg: &ScenarioConfig, seed: u64, net: &Mlp) -> Result<(RunReport, EpisodeLog)> {
    let mut env = OracleEnv::new(cfg.clone(), seed)?;
    net.check_sizes(&dqn_sizes(cfg, env.state_len()))?;
    let mut agent = DqnAgent::from_network(net.clone(), &cfg.dqn, derive_seed(seed, 3));
    run_episode(&mut env, &mut agent)?;
    let report = aggregate_log("tco-drl", env.log(), &cfg.oracles)?;
    Ok((report, env.into_log()))
}

pub fn dqn_sizes(cfg: &ScenarioConfig, state_len: usize) -> Vec<usize> {
    let mut s = vec![state_len];
    s.extend(&cfg.dqn.hidden);
    s.push(cfg.oracle_count());
    s
}

/// Run one agent on the scenario's request stream.
///
/// The DQN first trains for `dqn.train_episodes` episodes. Its reported run
/// is the trained agent on the evaluation stream, still learning online at
/// the exploration floor; the frozen greedy evaluation and the first
/// (cold-start) training episode are reported alongside.
pub fn run_agent(kind: AgentKind, cfg: &ScenarioConfig, seed: u64) -> Result<AgentRun> {
    run_agent_trained_on(kind, cfg, cfg, seed)
}

/// Like [`run_agent`], but the DQN trains on `train_cfg` before meeting
/// `cfg`. Baselines ignore `train_cfg`.
pub fn run_agent_trained_on(
    kind: AgentKind,
    train_cfg: &ScenarioConfig,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<AgentRun> {
    match baseline(kind, cfg, derive_seed(seed, 4)) {
        Some(mut selector) => {
            let mut env = OracleEnv::new(cfg.clone(), seed)?;
            run_episode(&mut env, selector.as_mut())?;
            let report = aggregate_log(kind.as_str(), env.log(), &cfg.oracles)?;
            Ok(AgentRun { kind, report, log: env.into_log(), cold_start: None, frozen: None })
        }
        None => {
            let training = train_dqn(train_cfg, seed, train_cfg.dqn.train_episodes)?;
            let cold_start = training.episodes.first().cloned();
            let (frozen, _) = evaluate_network(cfg, seed, training.agent.network())?;
            let mut agent = training.agent;
            agent.set_training(true);
            agent.reset_epsilon(cfg.dqn.epsilon_floor);
            let mut env = OracleEnv::new(cfg.clone(), seed)?;
            run_episode(&mut env, &mut agent)?;
            let report = aggregate_log(kind.as_str(), env.log(), &cfg.oracles)?;
            Ok(AgentRun { kind, report, log: env.into_log(), cold_start, frozen: Some(frozen) })
        }
    }
}

/// Write one agent's reports under `dir`.
pub fn export_run(run: &AgentRun, dir: &Path) -> Result<()> {
    export_report(&run.report, dir)?;
    export_log(&run.log, dir)?;
    if let Some(r) = &run.cold_start {
        export_report(r, &dir.join("cold-start"))?;
    }
    if let Some(r) = &run.frozen {
        export_report(r, &dir.join("frozen"))?;
    }
    Ok(())
}

/// Run several agents in parallel; results keep the order of `kinds`.
pub fn run_agents(kinds: &[AgentKind], cfg: &ScenarioConfig, seed: u64) -> Result<Vec<AgentRun>> {
    kinds.par_iter().map(|&k| run_agent(k, cfg, seed)).collect()
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agent: String,
    pub point: f64,
    pub requests: u64,
    pub match_rate: f64,
    pub trusted: u64,
    pub benign: u64,
    pub malicious: u64,
    pub malicious_fraction: f64,
    pub average_cost: f64,
    pub average_response_time: f64,
    pub success_rate: f64,
}

impl SweepRow {
    pub fn new(point: f64, report: &RunReport) -> Self {
        let s = &report.summary;
        Self {
            agent: s.agent.clone(),
            point,
            requests: s.requests,
            match_rate: s.match_rate,
            trusted: s.assignments.trusted,
            benign: s.assignments.benign,
            malicious: s.assignments.malicious,
            malicious_fraction: s.fractions.malicious,
            average_cost: s.average_cost,
            average_response_time: s.average_response_time,
            success_rate: s.success_rate,
        }
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let err = |e: csv::Error| ExperimentError::Metrics(MetricsError::Csv { path: path.to_path_buf(), source: e });
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Noise levels in percent, as used by `sweep-noise`.
pub const NOISE_GRID: [u32; 6] = [0, 10, 20, 30, 40, 50];

/// Every (agent, point) pair of a sweep, run in parallel.
fn sweep<F>(kinds: &[AgentKind], points: &[f64], seed: u64, make: F) -> Result<Vec<(f64, AgentRun)>>
where
    F: Fn(f64) -> Result<ScenarioConfig> + Sync,
{
    let jobs: Vec<(f64, AgentKind)> =
        points.iter().flat_map(|&p| kinds.iter().map(move |&k| (p, k))).collect();
    jobs.par_iter()
        .map(|&(p, k)| Ok((p, run_agent(k, &make(p)?, seed)?)))
        .collect()
}

pub fn sweep_noise(
    cfg: &ScenarioConfig,
    kinds: &[AgentKind],
    percents: &[u32],
    seed: u64,
) -> Result<Vec<(f64, AgentRun)>> {
    let points: Vec<f64> = percents.iter().map(|&p| f64::from(p)).collect();
    sweep(kinds, &points, seed, |p| {
        let mut c = cfg.clone();
        c.noise = p / 100.0;
        Ok(c)
    })
}

/// Convert non-malicious oracles (seeded choice) until `count` are malicious.
pub fn with_malicious_count(cfg: &ScenarioConfig, count: usize, seed: u64) -> Result<ScenarioConfig> {
    let mut c = cfg.clone();
    let have = c.oracles.iter().filter(|o| o.behavior_class == BehaviorClass::Malicious).count();
    if count < have || count > c.oracles.len() {
        return Err(ExperimentError::Invalid(format!(
            "malicious count {count} outside {have}..={}",
            c.oracles.len()
        )));
    }
    let mut candidates: Vec<usize> = c
        .oracles
        .iter()
        .filter(|o| o.behavior_class != BehaviorClass::Malicious)
        .map(|o| o.oid)
        .collect();
    candidates.shuffle(&mut StdRng::seed_from_u64(derive_seed(seed, 5)));
    for oid in candidates.into_iter().take(count - have) {
        c.oracles[oid].behavior_class = BehaviorClass::Malicious;
    }
    Ok(c)
}

pub fn sweep_malicious(
    cfg: &ScenarioConfig,
    kinds: &[AgentKind],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<(f64, AgentRun)>> {
    let points: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    sweep(kinds, &points, seed, |p| with_malicious_count(cfg, p as usize, seed))
}

/// Attack scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackScenario {
    Me,
    Ooa,
    Osa,
}

impl AttackScenario {
    pub const ALL: [AttackScenario; 3] = [AttackScenario::Me, AttackScenario::Ooa, AttackScenario::Osa];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackScenario::Me => "me",
            AttackScenario::Ooa => "ooa",
            AttackScenario::Osa => "osa",
        }
    }

    /// Policy used by the `attack` experiment, first active in `start_window`.
    pub fn policy(self, start_window: u32) -> AttackPolicy {
        let kind = match self {
            AttackScenario::Me => AttackKind::Me,
            AttackScenario::Ooa => AttackKind::Ooa { on_windows: 2, off_windows: 1, cycles: Some(1) },
            AttackScenario::Osa => AttackKind::Osa { trigger_margin: 0.5, stealth_severe: 0.02 },
        };
        AttackPolicy { kind, start_window }
    }
}

/// Traces of one attack run.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub scenario: AttackScenario,
    pub mode: WindowMode,
    pub attacker: usize,
    pub report: RunReport,
    pub log: EpisodeLog,
}

impl AttackRun {
    /// First window (1-based) at whose close the attacker is below the
    /// threshold, if any.
    pub fn first_untrusted(&self, threshold: f64) -> Option<usize> {
        self.report
            .reputation_trace
            .iter()
            .position(|r| r[self.attacker] < threshold)
            .map(|i| i + 1)
    }

    /// Windows from the first drop below the threshold until reputation is
    /// back at or above it. `None` when it never drops or never recovers.
    pub fn recovery_windows(&self, threshold: f64) -> Option<usize> {
        let drop = self.first_untrusted(threshold)?;
        self.report.reputation_trace[drop..]
            .iter()
            .position(|r| r[self.attacker] >= threshold)
            .map(|i| i + 1)
    }

    /// Requests the attacker served in windows that opened with its
    /// reputation below the threshold.
    pub fn served_while_untrusted(&self, threshold: f64) -> usize {
        let trace = &self.report.reputation_trace;
        self.log
            .records
            .iter()
            .filter(|r| r.oid == self.attacker && r.window >= 2)
            .filter(|r| trace.get(r.window as usize - 2).is_some_and(|w| w[self.attacker] < threshold))
            .count()
    }
}

/// Cheapest trusted oracle without an attack policy: the natural attacker,
/// since a cost-aware selector routes traffic to it.
pub fn default_attacker(cfg: &ScenarioConfig) -> Option<usize> {
    cfg.oracles
        .iter()
        .filter(|o| o.behavior_class == BehaviorClass::Trusted && o.attack_policy.is_none())
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.oid.cmp(&b.oid)))
        .map(|o| o.oid)
}

/// Attack configuration: enforcement on, one attacker. For OSA the other
/// trusted oracles always serve safely, so they form a clean reference the
/// attacker's reputation is compared against.
pub fn attack_config(
    cfg: &ScenarioConfig,
    scenario: AttackScenario,
    attacker: usize,
    start_window: u32,
    mode: WindowMode,
) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.trust.enforce_threshold = true;
    c.window.mode = mode;
    c.oracles[attacker].attack_policy = Some(scenario.policy(start_window));
    if scenario == AttackScenario::Osa {
        c.behavior.trusted = BehaviorDistribution([1.0, 0.0, 0.0, 0.0]);
    }
    c
}

/// Run `scenario` with oracles picked by `kind`. The DQN trains on the
/// same community without the attack, so the attack is unseen when it
/// starts.
pub fn run_attack(
    cfg: &ScenarioConfig,
    scenario: AttackScenario,
    attacker: usize,
    start_window: u32,
    mode: WindowMode,
    kind: AgentKind,
    seed: u64,
) -> Result<AttackRun> {
    let c = attack_config(cfg, scenario, attacker, start_window, mode);
    let mut clean = c.clone();
    clean.oracles[attacker].attack_policy = None;
    let run = run_agent_trained_on(kind, &clean, &c, seed)?;
    Ok(AttackRun { scenario, mode, attacker, report: run.report, log: run.log })
}

/// Final reputations after `windows` windows for every W in `lengths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTable {
    pub lengths: Vec<usize>,
    pub windows: usize,
    /// Labels of the rows: `unit` then one per oracle.
    pub labels: Vec<String>,
    /// `values[row][k]` is the reputation of row `row` for `lengths[k]`.
    pub values: Vec<Vec<f64>>,
}

/// Five oracles (3 trusted, 1 benign, 1 malicious), one service class.
pub fn window_table_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.oracles.truncate(5);
    cfg.service_classes.truncate(1);
    let classes = [
        BehaviorClass::Trusted,
        BehaviorClass::Trusted,
        BehaviorClass::Trusted,
        BehaviorClass::Benign,
        BehaviorClass::Malicious,
    ];
    for (j, o) in cfg.oracles.iter_mut().enumerate() {
        o.oid = j;
        o.service_class = 0;
        o.behavior_class = classes[j];
        o.attack_policy = None;
    }
    cfg
}

/// Re-run the same round-robin request stream for each window length.
/// Behavior draws are identical across lengths (no enforcement, no
/// reputation-dependent behavior), so rows differ only through W.
pub fn window_table(
    cfg: &ScenarioConfig,
    lengths: &[usize],
    windows: usize,
    seed: u64,
) -> Result<WindowTable> {
    let m = cfg.oracle_count();
    let per = cfg.window.requests_per_window;
    let columns: Vec<Vec<f64>> = lengths
        .par_iter()
        .map(|&w| {
            let mut c = cfg.clone();
            c.window.length = w;
            c.window.mode = WindowMode::Improved;
            c.trust.enforce_threshold = false;
            c.requests.count = windows * per;
            let mut env = OracleEnv::new(c, seed)?;
            run_episode(&mut env, &mut RoundRobin::new())?;
            let last = env.trust().reputations().to_vec();
            let mut unit = ReputationWindow::new(w, WindowMode::Improved);
            let mut u = 0.0;
            for _ in 0..windows {
                u = unit.close(1.0, cfg.trust.time_weight);
            }
            let mut col = vec![u];
            col.extend(last);
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let mut labels = vec!["unit".to_string()];
    labels.extend(cfg.oracles.iter().map(|o| format!("o{}_{}", o.oid, o.behavior_class.as_str())));
    let values = (0..=m).map(|row| columns.iter().map(|c| c[row]).collect()).collect();
    Ok(WindowTable { lengths: lengths.to_vec(), windows, labels, values })
}

pub fn write_window_table(table: &WindowTable, path: &Path) -> Result<()> {
    let err = |e: csv::Error| ExperimentError::Metrics(MetricsError::Csv { path: path.to_path_buf(), source: e });
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["row".to_string()];
    header.extend(table.lengths.iter().map(|l| format!("w{l}")));
    w.write_record(&header).map_err(err)?;
    for (label, row) in table.labels.iter().zip(&table.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}
