//! Core value types and scenario configuration.
//!
//! A scenario is a single JSON document. Every field is optional; missing
//! fields take the documented defaults, so `{}` yields the reference
//! 15-oracle community.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackKind, AttackPolicy};

/// Seed used to draw the default roster. Changing it changes the default
/// scenario, so the acceptance scenario file pins the resulting roster.
pub const DEFAULT_ROSTER_SEED: u64 = 20_240_601;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("reading scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid { path: path.into(), message: message.into() }
    }

    /// Field path of the offending value.
    pub fn path(&self) -> &str {
        match self {
            ScenarioError::Invalid { path, .. }
            | ScenarioError::Parse { path, .. }
            | ScenarioError::Io { path, .. } => path,
        }
    }
}

/// Four harm levels, ordered from harmless to most harmful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorLevel {
    Safe,
    MinorHarm,
    ModerateHarm,
    SevereHarm,
}

impl BehaviorLevel {
    pub const ALL: [BehaviorLevel; 4] = [
        BehaviorLevel::Safe,
        BehaviorLevel::MinorHarm,
        BehaviorLevel::ModerateHarm,
        BehaviorLevel::SevereHarm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorLevel::Safe => "safe",
            BehaviorLevel::MinorHarm => "minor_harm",
            BehaviorLevel::ModerateHarm => "moderate_harm",
            BehaviorLevel::SevereHarm => "severe_harm",
        }
    }
}

/// Ground-truth behavior class of a simulated oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorClass {
    Trusted,
    Benign,
    Malicious,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; 3] =
        [BehaviorClass::Trusted, BehaviorClass::Benign, BehaviorClass::Malicious];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorClass::Trusted => "trusted",
            BehaviorClass::Benign => "benign",
            BehaviorClass::Malicious => "malicious",
        }
    }
}

/// Probability mass over the four harm levels, indexed by [`BehaviorLevel::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorDistribution(pub [f64; 4]);

impl BehaviorDistribution {
    pub const UNIFORM: BehaviorDistribution = BehaviorDistribution([0.25; 4]);

    pub fn mass(&self, level: BehaviorLevel) -> f64 {
        self.0[level.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.total() - 1.0).abs() <= WEIGHT_TOLERANCE
    }

    /// Inverse-CDF draw. Falls back to the last level with positive mass
    /// when rounding leaves `u` past the cumulative total.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BehaviorLevel {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for level in BehaviorLevel::ALL {
            acc += self.mass(level);
            if u < acc {
                return level;
            }
        }
        BehaviorLevel::ALL
            .into_iter()
            .rev()
            .find(|l| self.mass(*l) > 0.0)
            .unwrap_or(BehaviorLevel::Safe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceClass {
    pub id: usize,
    #[serde(default)]
    pub description: String,
}

/// One data request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRequest {
    pub rid: u64,
    /// Simulated seconds.
    pub arrival_ts: f64,
    /// Relative deadline in seconds.
    pub ddl: f64,
    /// Work units.
    pub complexity: f64,
    pub service_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    pub oid: usize,
    /// Fixed fee charged per request.
    pub cost: f64,
    /// Work units processed per second.
    pub performance: f64,
    pub service_class: usize,
    /// Staked tokens.
    pub stake: f64,
    pub behavior_class: BehaviorClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_policy: Option<AttackPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestConfig {
    pub count: usize,
    /// Poisson arrival rate, requests per second.
    pub arrival_rate: f64,
    pub complexity_mean: f64,
    pub complexity_std: f64,
    /// Deadline applied to every request, seconds.
    pub ddl: f64,
}

impl Default for RequestConfig {
    fn default() -> Self {
        Self {
            count: 6000,
            arrival_rate: 0.5,
            complexity_mean: 6000.0,
            complexity_std: 500.0,
            ddl: 10.0,
        }
    }
}

/// How stored window values are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Store the time-weighted composite reputation, so earlier windows keep
    /// feeding later ones.
    Improved,
    /// Store each window's independent base reputation.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Number of stored windows W.
    pub length: usize,
    pub requests_per_window: usize,
    pub mode: WindowMode,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: 5, requests_per_window: 120, mode: WindowMode::Improved }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    /// Weight of relative response frequency in the reliability score.
    pub frequency_weight: f64,
    /// Weight of success rate in the reliability score.
    pub success_weight: f64,
    /// Weight of deadline efficiency (DDL / average response time).
    pub efficiency_weight: f64,
    /// Weight of reliability in the base reputation.
    pub reliability_weight: f64,
    /// Weight of the behavior (harm) score, subtracted.
    pub behavior_weight: f64,
    /// Weight of the token score.
    pub token_weight: f64,
    /// Scale of the tanh time factor.
    pub time_weight: f64,
    /// Harm scores for safe, minor, moderate and severe behavior.
    pub harm_scores: [f64; 4],
    pub threshold: f64,
    pub initial_reputation: f64,
    /// Bar untrusted oracles from service.
    pub enforce_threshold: bool,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            frequency_weight: 0.2,
            success_weight: 0.4,
            efficiency_weight: 0.4,
            reliability_weight: 0.4,
            behavior_weight: 0.4,
            token_weight: 0.2,
            time_weight: 0.6,
            harm_scores: [0.0, 1.0, 5.0, 100.0],
            threshold: -1.5,
            initial_reputation: 0.5,
            enforce_threshold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Scale of the cost bonus `e^(pivot - cost)`.
    pub cost_bonus_weight: f64,
    /// Cost at which the bonus exponent is zero.
    pub cost_pivot: f64,
    /// Penalty for a service-class mismatch.
    pub mismatch_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { cost_bonus_weight: 2.5, cost_pivot: 1.5, mismatch_penalty: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// Learn every `learn_every` environment steps.
    pub learn_every: usize,
    /// Copy evaluation weights into the target network every this many learn steps.
    pub target_sync: usize,
    pub hidden: Vec<usize>,
    /// Temporal-difference errors are clipped to `[-td_clip, td_clip]`.
    pub td_clip: f64,
    /// Training episodes before the evaluation episode.
    pub train_episodes: usize,
    /// Exploration rate every training episode after the first restarts from.
    pub restart_epsilon: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 800,
            batch_size: 30,
            learning_rate: 0.01,
            discount: 0.9,
            epsilon_start: 1.0,
            epsilon_decay: 0.995,
            epsilon_floor: 0.01,
            learn_every: 4,
            target_sync: 100,
            hidden: vec![64, 64],
            td_clip: 10.0,
            train_episodes: 8,
            restart_epsilon: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub trusted: BehaviorDistribution,
    pub benign: BehaviorDistribution,
    pub malicious: BehaviorDistribution,
    /// Distribution used by malicious-with-everyone attackers and OOA off phases.
    pub malicious_with_everyone: BehaviorDistribution,
    /// Execution-time multiplier for minor harm (data delays).
    pub minor_delay_factor: f64,
    /// Probability that a moderate-harm response fails verification.
    pub moderate_failure_prob: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            trusted: BehaviorDistribution([0.95, 0.05, 0.0, 0.0]),
            benign: BehaviorDistribution([0.85, 0.12, 0.03, 0.0]),
            malicious: BehaviorDistribution([0.55, 0.20, 0.15, 0.10]),
            malicious_with_everyone: BehaviorDistribution([0.10, 0.20, 0.30, 0.40]),
            minor_delay_factor: 1.5,
            moderate_failure_prob: 0.7,
        }
    }
}

impl BehaviorConfig {
    pub fn for_class(&self, class: BehaviorClass) -> BehaviorDistribution {
        match class {
            BehaviorClass::Trusted => self.trusted,
            BehaviorClass::Benign => self.benign,
            BehaviorClass::Malicious => self.malicious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsgConfig {
    /// Size of the cheapest-first shortlist.
    pub q: usize,
}

impl Default for PsgConfig {
    fn default() -> Self {
        Self { q: 3 }
    }
}

/// A fully validated scenario. Immutable after [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub service_classes: Vec<ServiceClass>,
    pub oracles: Vec<OracleProfile>,
    pub requests: RequestConfig,
    pub window: WindowConfig,
    pub trust: TrustConfig,
    pub reward: RewardConfig,
    pub dqn: DqnConfig,
    pub behavior: BehaviorConfig,
    pub psg: PsgConfig,
    /// Fraction of behavior draws replaced by a uniform draw over all levels.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            service_classes: default_service_classes(),
            oracles: generate_roster(&RosterSpec::default(), DEFAULT_ROSTER_SEED),
            requests: RequestConfig::default(),
            window: WindowConfig::default(),
            trust: TrustConfig::default(),
            reward: RewardConfig::default(),
            dqn: DqnConfig::default(),
            behavior: BehaviorConfig::default(),
            psg: PsgConfig::default(),
            noise: 0.0,
            seed: 7,
        }
    }
}

impl ScenarioConfig {
    pub fn oracle_count(&self) -> usize {
        self.oracles.len()
    }

    pub fn class_count(&self) -> usize {
        self.service_classes.len()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|source| ScenarioError::Parse { path: "$".into(), source })?;
        validate_scenario(raw)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

fn default_service_classes() -> Vec<ServiceClass> {
    ["high update frequency", "high accuracy", "low latency"]
        .iter()
        .enumerate()
        .map(|(id, d)| ServiceClass { id, description: (*d).to_string() })
        .collect()
}

/// Parameters for drawing a synthetic oracle roster.
#[derive(Debug, Clone)]
pub struct RosterSpec {
    pub classes: usize,
    pub per_class: usize,
    pub malicious: usize,
    pub benign: usize,
    pub stake: f64,
}

impl Default for RosterSpec {
    fn default() -> Self {
        Self { classes: 3, per_class: 5, malicious: 3, benign: 3, stake: 100.0 }
    }
}

/// Draw a roster. Oracles are numbered class-major. Behavior classes are
/// handed out slot by slot across service classes (malicious first, then
/// benign), so each service class gets a similar mix.
///
/// Performance ~ Normal(1000, 150) clipped at 200. Cost ~ Uniform(0.1, 1.0);
/// trusted oracles keep the larger of two draws, which skews them toward
/// the expensive half.
pub fn generate_roster(spec: &RosterSpec, seed: u64) -> Vec<OracleProfile> {
    let mut rng = StdRng::seed_from_u64(seed);
    let perf = Normal::new(1000.0, 150.0).expect("valid normal");
    let total = spec.classes * spec.per_class;
    let mut labels = vec![BehaviorClass::Trusted; total];
    let mut handed = 0;
    'slots: for slot in 0..spec.per_class {
        for class in 0..spec.classes {
            let label = if handed < spec.malicious {
                BehaviorClass::Malicious
            } else if handed < spec.malicious + spec.benign {
                BehaviorClass::Benign
            } else {
                break 'slots;
            };
            labels[class * spec.per_class + slot] = label;
            handed += 1;
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(oid, behavior_class)| {
            let mut cost = rng.gen_range(0.1..1.0);
            if behavior_class == BehaviorClass::Trusted {
                cost = f64::max(cost, rng.gen_range(0.1..1.0));
            }
            let performance: f64 = perf.sample(&mut rng);
            OracleProfile {
                oid,
                cost: round_to(cost, 3),
                performance: round_to(performance.max(200.0), 1),
                service_class: oid / spec.per_class,
                stake: spec.stake,
                behavior_class,
                attack_policy: None,
            }
        })
        .collect()
}

fn round_to(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

/// Parse and validate a scenario document. Missing fields take defaults.
pub fn validate_scenario(raw: serde_json::Value) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::Parse { path, source: e.into_inner() }
    })?;
    check(&cfg)?;
    Ok(cfg)
}

fn check(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let t = &cfg.trust;
    let rel = t.frequency_weight + t.success_weight + t.efficiency_weight;
    if (rel - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(ScenarioError::invalid(
            "trust",
            format!("reliability weights must sum to 1 (got {rel})"),
        ));
    }
    let base = t.reliability_weight + t.behavior_weight + t.token_weight;
    if (base - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(ScenarioError::invalid(
            "trust",
            format!("base reputation weights must sum to 1 (got {base})"),
        ));
    }
    if !(t.time_weight > 0.0) {
        return Err(ScenarioError::invalid("trust.time_weight", "must be positive"));
    }
    if t.harm_scores.windows(2).any(|w| w[0] > w[1]) {
        return Err(ScenarioError::invalid(
            "trust.harm_scores",
            "harm scores must be non-decreasing with harm level",
        ));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(ScenarioError::invalid("noise", "noise fraction must lie in [0, 1]"));
    }
    if cfg.window.length < 1 {
        return Err(ScenarioError::invalid("window.length", "window length must be at least 1"));
    }
    if cfg.window.requests_per_window < 1 {
        return Err(ScenarioError::invalid(
            "window.requests_per_window",
            "must be at least 1",
        ));
    }
    let r = &cfg.requests;
    if !(r.arrival_rate > 0.0) {
        return Err(ScenarioError::invalid("requests.arrival_rate", "arrival rate must be positive"));
    }
    if !(r.ddl > 0.0) {
        return Err(ScenarioError::invalid("requests.ddl", "deadline must be positive"));
    }
    if !(r.complexity_mean > 0.0) || !(r.complexity_std >= 0.0) {
        return Err(ScenarioError::invalid(
            "requests",
            "complexity mean must be positive and std non-negative",
        ));
    }
    if cfg.service_classes.is_empty() {
        return Err(ScenarioError::invalid("service_classes", "at least one service class required"));
    }
    for (i, c) in cfg.service_classes.iter().enumerate() {
        if c.id != i {
            return Err(ScenarioError::invalid(
                format!("service_classes[{i}].id"),
                format!("service class ids must be 0..C-1 in order (found {})", c.id),
            ));
        }
    }
    if cfg.oracles.is_empty() {
        return Err(ScenarioError::invalid("oracles", "at least one oracle required"));
    }
    for (i, o) in cfg.oracles.iter().enumerate() {
        let p = |f: &str| format!("oracles[{i}].{f}");
        if o.oid != i {
            return Err(ScenarioError::invalid(p("oid"), "oracle ids must be 0..M-1 in order"));
        }
        if !(o.cost > 0.0) {
            return Err(ScenarioError::invalid(p("cost"), "cost must be positive"));
        }
        if !(o.performance > 0.0) {
            return Err(ScenarioError::invalid(p("performance"), "performance must be positive"));
        }
        if !(o.stake >= 0.0) {
            return Err(ScenarioError::invalid(p("stake"), "stake must be non-negative"));
        }
        if o.service_class >= cfg.service_classes.len() {
            return Err(ScenarioError::invalid(
                p("service_class"),
                format!("unknown service class {}", o.service_class),
            ));
        }
        if let Some(policy) = &o.attack_policy {
            policy
                .validate()
                .map_err(|m| ScenarioError::invalid(p("attack_policy"), m))?;
        }
    }
    let b = &cfg.behavior;
    for (name, d) in [
        ("trusted", b.trusted),
        ("benign", b.benign),
        ("malicious", b.malicious),
        ("malicious_with_everyone", b.malicious_with_everyone),
    ] {
        if !d.is_valid() {
            return Err(ScenarioError::invalid(
                format!("behavior.{name}"),
                "distribution must be non-negative and sum to 1",
            ));
        }
    }
    if !(0.0..=1.0).contains(&b.moderate_failure_prob) {
        return Err(ScenarioError::invalid("behavior.moderate_failure_prob", "must lie in [0, 1]"));
    }
    if !(b.minor_delay_factor >= 1.0) {
        return Err(ScenarioError::invalid("behavior.minor_delay_factor", "must be at least 1"));
    }
    let d = &cfg.dqn;
    if d.replay_capacity < 1 || d.batch_size < 1 || d.learn_every < 1 || d.target_sync < 1 {
        return Err(ScenarioError::invalid(
            "dqn",
            "capacity, batch size, learning frequency and target sync must be positive",
        ));
    }
    if !(0.0..=1.0).contains(&d.discount) {
        return Err(ScenarioError::invalid("dqn.discount", "discount must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&d.epsilon_floor)
        || !(d.epsilon_floor..=1.0).contains(&d.epsilon_start)
    {
        return Err(ScenarioError::invalid("dqn.epsilon_start", "need 0 <= floor <= start <= 1"));
    }
    if !(0.0..=1.0).contains(&d.restart_epsilon) {
        return Err(ScenarioError::invalid("dqn.restart_epsilon", "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&d.epsilon_decay) {
        return Err(ScenarioError::invalid("dqn.epsilon_decay", "must lie in [0, 1]"));
    }
    if d.hidden.contains(&0) {
        return Err(ScenarioError::invalid("dqn.hidden", "hidden layers must be non-empty"));
    }
    if !(d.td_clip > 0.0) {
        return Err(ScenarioError::invalid("dqn.td_clip", "must be positive"));
    }
    if cfg.psg.q < 1 {
        return Err(ScenarioError::invalid("psg.q", "q must be at least 1"));
    }
    Ok(())
}

/// Convenience used by sweeps: turn `oid` into a malicious oracle.
pub fn make_malicious(cfg: &mut ScenarioConfig, oid: usize) {
    cfg.oracles[oid].behavior_class = BehaviorClass::Malicious;
}

/// Attach an attack policy that activates at `start_window`.
pub fn with_attack(cfg: &mut ScenarioConfig, oid: usize, kind: AttackKind, start_window: u32) {
    cfg.oracles[oid].attack_policy = Some(AttackPolicy { kind, start_window });
}
