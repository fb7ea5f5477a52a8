//! Discrete-event simulation of an oracle community.
//!
//! Requests arrive as a Poisson stream and are dispatched at their arrival
//! instant. Every oracle is a single FIFO server, so a dispatch fixes the
//! request's start and finish times immediately (Lindley recursion over the
//! oracle's free-at time). Reputation windows close every
//! `requests_per_window` dispatches.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::effective_distribution;
use crate::domain::{
    BehaviorConfig, BehaviorDistribution, BehaviorLevel, DataRequest, OracleProfile, RewardConfig,
    ScenarioConfig,
};
use crate::trust::{request_success, TrustBreakdown, TrustEngine, TrustError, TrustWeights, WindowStats};

/// Complexity normalizer in the state encoding.
pub const COMPLEXITY_SCALE: f64 = 6000.0;
/// Deadline normalizer in the state encoding.
pub const DDL_SCALE: f64 = 10.0;
/// Performance normalizer in the state encoding.
pub const PERFORMANCE_SCALE: f64 = 1000.0;
/// Reputations are clipped to +-this before scaling into [-1, 1].
pub const REPUTATION_CLIP: f64 = 5.0;
/// Upper bound on the encoded wait / ddl ratio.
pub const WAIT_CLIP: f64 = 10.0;
/// Features per oracle in the state vector.
pub const ORACLE_FEATURES: usize = 6;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("arrival rate must be positive (got {0})")]
    NonPositiveRate(f64),
    #[error("unknown oracle {0}")]
    UnknownOracle(usize),
    #[error("action {action} out of range for {oracles} oracles")]
    ActionOutOfRange { action: usize, oracles: usize },
    #[error("no pending request")]
    NoPendingRequest,
    #[error(transparent)]
    Trust(#[from] TrustError),
}

/// Derive an independent stream seed from a run seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Poisson arrivals, Normal complexity clipped at 1 work unit, uniform
/// service class. Deterministic for a given rng state.
pub fn generate_requests<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<DataRequest>, EnvError> {
    let r = &cfg.requests;
    if !(r.arrival_rate > 0.0) {
        return Err(EnvError::NonPositiveRate(r.arrival_rate));
    }
    let gaps = Exp::new(r.arrival_rate).map_err(|_| EnvError::NonPositiveRate(r.arrival_rate))?;
    let complexity = Normal::new(r.complexity_mean, r.complexity_std).expect("validated std");
    let classes = cfg.class_count();
    let mut clock = 0.0;
    Ok((0..r.count)
        .map(|i| {
            clock += gaps.sample(rng);
            DataRequest {
                rid: i as u64,
                arrival_ts: clock,
                ddl: r.ddl,
                complexity: complexity.sample(rng).max(1.0),
                service_class: rng.gen_range(0..classes),
            }
        })
        .collect())
}

/// Draw one response behavior. With probability `noise` the draw is
/// replaced by a uniform draw over all four levels.
pub fn sample_behavior<R: Rng + ?Sized>(
    profile: &OracleProfile,
    window_index: u32,
    reputation: f64,
    noise: f64,
    threshold: f64,
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> BehaviorLevel {
    let dist = effective_distribution(profile, window_index, reputation, threshold, cfg);
    // Always consume the noise coin so streams stay aligned across noise levels.
    let coin: f64 = rng.gen();
    if coin < noise {
        BehaviorDistribution::UNIFORM.sample(rng)
    } else {
        dist.sample(rng)
    }
}

/// Verification outcome of a response with the given behavior.
pub fn verify<R: Rng + ?Sized>(behavior: BehaviorLevel, cfg: &BehaviorConfig, rng: &mut R) -> bool {
    let roll: f64 = rng.gen();
    match behavior {
        BehaviorLevel::Safe | BehaviorLevel::MinorHarm => true,
        BehaviorLevel::ModerateHarm => roll >= cfg.moderate_failure_prob,
        BehaviorLevel::SevereHarm => false,
    }
}

/// Outcome of one request/oracle interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub rid: u64,
    /// Oracle that served the request.
    pub oid: usize,
    /// Oracle the selector asked for; differs from `oid` after a redirect.
    pub requested_oid: usize,
    pub window: u64,
    pub arrival_ts: f64,
    pub start_ts: f64,
    pub finish_ts: f64,
    pub exe_time: f64,
    /// finish - arrival.
    pub response_time: f64,
    pub behavior: BehaviorLevel,
    pub verified: bool,
    /// Met the deadline and passed verification.
    pub success: bool,
    pub cost: f64,
    pub service_matched: bool,
    pub redirected: bool,
}

/// Per-oracle FIFO servers.
#[derive(Debug, Clone)]
pub struct QueueBank {
    free_at: Vec<f64>,
}

impl QueueBank {
    pub fn new(oracles: usize) -> Self {
        Self { free_at: vec![0.0; oracles] }
    }

    pub fn free_at(&self, oid: usize) -> f64 {
        self.free_at[oid]
    }

    /// Seconds a request arriving at `now` would wait before service.
    pub fn wait(&self, oid: usize, now: f64) -> f64 {
        (self.free_at[oid] - now).max(0.0)
    }

    /// Serve `req` on `profile`. Minor harm stretches execution by
    /// `minor_delay_factor`.
    pub fn dispatch(
        &mut self,
        req: &DataRequest,
        profile: &OracleProfile,
        behavior: BehaviorLevel,
        verified: bool,
        minor_delay_factor: f64,
    ) -> Result<ServiceRecord, EnvError> {
        let free = self
            .free_at
            .get_mut(profile.oid)
            .ok_or(EnvError::UnknownOracle(profile.oid))?;
        let start_ts = req.arrival_ts.max(*free);
        let mut exe_time = req.complexity / profile.performance;
        if behavior == BehaviorLevel::MinorHarm {
            exe_time *= minor_delay_factor;
        }
        let finish_ts = start_ts + exe_time;
        *free = finish_ts;
        let response_time = finish_ts - req.arrival_ts;
        Ok(ServiceRecord {
            rid: req.rid,
            oid: profile.oid,
            requested_oid: profile.oid,
            window: 0,
            arrival_ts: req.arrival_ts,
            start_ts,
            finish_ts,
            exe_time,
            response_time,
            behavior,
            verified,
            success: request_success(response_time, req.ddl, verified),
            cost: profile.cost,
            service_matched: req.service_class == profile.service_class,
            redirected: false,
        })
    }
}

/// `(1 + w * e^(pivot - cost)) * exe/response + reputation - penalty * mismatch`.
pub fn compute_reward(rec: &ServiceRecord, reputation: f64, w: &RewardConfig) -> f64 {
    reward_terms(rec.cost, rec.exe_time / rec.response_time, reputation, rec.service_matched, w)
}

/// Reward from its raw ingredients; shared with reward-predicting selectors.
pub fn reward_terms(
    cost: f64,
    exe_ratio: f64,
    reputation: f64,
    matched: bool,
    w: &RewardConfig,
) -> f64 {
    let penalty = if matched { 0.0 } else { 1.0 };
    (1.0 + w.cost_bonus_weight * (w.cost_pivot - cost).exp()) * exe_ratio + reputation
        - w.mismatch_penalty * penalty
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestView {
    pub complexity: f64,
    pub ddl: f64,
    pub service_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleView {
    pub reputation: f64,
    pub cost: f64,
    /// Seconds the pending request would queue at this oracle.
    pub wait: f64,
    pub performance: f64,
    pub service_class: usize,
    pub trusted: bool,
}

/// What a selector sees at a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub clock: f64,
    pub request: RequestView,
    pub oracles: Vec<OracleView>,
    pub classes: usize,
    /// Encoded feature vector, see [`encode_state`].
    pub features: Vec<f64>,
}

impl EnvState {
    pub fn oracle_count(&self) -> usize {
        self.oracles.len()
    }
}

pub fn state_len(oracles: usize, classes: usize) -> usize {
    2 + classes + ORACLE_FEATURES * oracles
}

/// Fixed layout:
/// `[complexity/6000, ddl/10, one-hot class (C)]` followed per oracle by
/// `[clip(rep, -5, 5)/5, min-max cost, min(wait/ddl, 10), perf/1000, class match, trusted]`.
pub fn encode_state(request: &RequestView, oracles: &[OracleView], classes: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(state_len(oracles.len(), classes));
    v.push(request.complexity / COMPLEXITY_SCALE);
    v.push(request.ddl / DDL_SCALE);
    v.extend((0..classes).map(|c| f64::from(u8::from(c == request.service_class))));
    let (lo, hi) = oracles
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.cost), hi.max(o.cost)));
    let span = hi - lo;
    for o in oracles {
        v.push(o.reputation.clamp(-REPUTATION_CLIP, REPUTATION_CLIP) / REPUTATION_CLIP);
        v.push(if span > 0.0 { (o.cost - lo) / span } else { 0.0 });
        v.push((o.wait / request.ddl).min(WAIT_CLIP));
        v.push(o.performance / PERFORMANCE_SCALE);
        v.push(f64::from(u8::from(o.service_class == request.service_class)));
        v.push(f64::from(u8::from(o.trusted)));
    }
    v
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Learning signal; includes the redirect penalty.
    pub reward: f64,
    pub next_state: Option<EnvState>,
    pub record: ServiceRecord,
    pub done: bool,
    /// Trust rows when this step closed a window.
    pub closed_window: Option<Vec<TrustBreakdown>>,
}

/// Everything an episode leaves behind.
#[derive(Debug, Clone, Default)]
pub struct EpisodeLog {
    pub records: Vec<ServiceRecord>,
    pub rewards: Vec<f64>,
    /// Final reputation of every oracle after each closed window.
    pub reputation_trace: Vec<Vec<f64>>,
    /// Served-request counts per oracle for each window.
    pub selection_trace: Vec<Vec<u32>>,
    pub trust_rows: Vec<TrustBreakdown>,
}

/// One simulation run. Single writer.
pub struct OracleEnv {
    cfg: ScenarioConfig,
    requests: Vec<DataRequest>,
    cursor: usize,
    queues: QueueBank,
    trust: TrustEngine,
    stats: WindowStats,
    window_steps: usize,
    window_selection: Vec<u32>,
    rng: StdRng,
    log: EpisodeLog,
}

impl OracleEnv {
    /// Build an environment whose request stream and behavior draws derive
    /// from `seed`.
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self, EnvError> {
        let mut req_rng = StdRng::seed_from_u64(derive_seed(seed, 1));
        let requests = generate_requests(&cfg, &mut req_rng)?;
        Ok(Self::with_requests(cfg, requests, seed))
    }

    pub fn with_requests(cfg: ScenarioConfig, requests: Vec<DataRequest>, seed: u64) -> Self {
        let m = cfg.oracle_count();
        let stakes: Vec<f64> = cfg.oracles.iter().map(|o| o.stake).collect();
        let trust = TrustEngine::new(
            m,
            TrustWeights::from(&cfg.trust),
            cfg.requests.ddl,
            cfg.window.length,
            cfg.window.mode,
            cfg.trust.initial_reputation,
        );
        Self {
            requests,
            cursor: 0,
            queues: QueueBank::new(m),
            trust,
            stats: WindowStats::new(&stakes),
            window_steps: 0,
            window_selection: vec![0; m],
            rng: StdRng::seed_from_u64(derive_seed(seed, 2)),
            log: EpisodeLog::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn oracle_count(&self) -> usize {
        self.cfg.oracle_count()
    }

    pub fn state_len(&self) -> usize {
        state_len(self.cfg.oracle_count(), self.cfg.class_count())
    }

    pub fn requests(&self) -> &[DataRequest] {
        &self.requests
    }

    pub fn trust(&self) -> &TrustEngine {
        &self.trust
    }

    pub fn steps_taken(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.requests.len()
    }

    /// 1-based index of the window in progress.
    pub fn window_index(&self) -> u32 {
        self.trust.windows_closed() as u32 + 1
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    pub fn observe(&self) -> Result<EnvState, EnvError> {
        let req = self.requests.get(self.cursor).ok_or(EnvError::NoPendingRequest)?;
        let now = req.arrival_ts;
        let request = RequestView {
            complexity: req.complexity,
            ddl: req.ddl,
            service_class: req.service_class,
        };
        let oracles: Vec<OracleView> = self
            .cfg
            .oracles
            .iter()
            .map(|o| OracleView {
                reputation: self.trust.reputation(o.oid),
                cost: o.cost,
                wait: self.queues.wait(o.oid, now),
                performance: o.performance,
                service_class: o.service_class,
                trusted: self.trust.is_trusted(o.oid),
            })
            .collect();
        let features = encode_state(&request, &oracles, self.cfg.class_count());
        Ok(EnvState { clock: now, request, oracles, classes: self.cfg.class_count(), features })
    }

    /// Highest-reputation trusted oracle, preferring the request's service
    /// class. Ties go to the lowest index.
    fn redirect_target(&self, service_class: usize) -> Option<usize> {
        let best = |same_class: bool| {
            self.cfg
                .oracles
                .iter()
                .filter(|o| self.trust.is_trusted(o.oid))
                .filter(|o| !same_class || o.service_class == service_class)
                .fold(None::<(usize, f64)>, |acc, o| {
                    let r = self.trust.reputation(o.oid);
                    match acc {
                        Some((_, br)) if br >= r => acc,
                        _ => Some((o.oid, r)),
                    }
                })
                .map(|(oid, _)| oid)
        };
        best(true).or_else(|| best(false))
    }

    /// Dispatch the pending request to `action`.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let m = self.oracle_count();
        if action >= m {
            return Err(EnvError::ActionOutOfRange { action, oracles: m });
        }
        let req = self.requests.get(self.cursor).cloned().ok_or(EnvError::NoPendingRequest)?;

        let mut served = action;
        let mut redirected = false;
        if self.cfg.trust.enforce_threshold && !self.trust.is_trusted(action) {
            if let Some(target) = self.redirect_target(req.service_class) {
                served = target;
                redirected = true;
            }
        }

        let profile = &self.cfg.oracles[served];
        let reputation = self.trust.reputation(served);
        let behavior = sample_behavior(
            profile,
            self.window_index(),
            reputation,
            self.cfg.noise,
            self.cfg.trust.threshold,
            &self.cfg.behavior,
            &mut self.rng,
        );
        let verified = verify(behavior, &self.cfg.behavior, &mut self.rng);
        let mut record = self.queues.dispatch(
            &req,
            profile,
            behavior,
            verified,
            self.cfg.behavior.minor_delay_factor,
        )?;
        record.requested_oid = action;
        record.redirected = redirected;
        record.window = self.trust.windows_closed() + 1;

        let mut reward = compute_reward(&record, reputation, &self.cfg.reward);
        if redirected {
            reward -= self.cfg.reward.mismatch_penalty;
        }

        self.stats.record(served, record.response_time, record.success, behavior)?;
        self.window_selection[served] += 1;
        self.window_steps += 1;
        self.cursor += 1;
        let done = self.is_done();

        let closed_window =
            if self.window_steps == self.cfg.window.requests_per_window || (done && self.window_steps > 0) {
                Some(self.close_window()?)
            } else {
                None
            };

        self.log.records.push(record.clone());
        self.log.rewards.push(reward);
        let next_state = if done { None } else { Some(self.observe()?) };
        Ok(StepOutcome { reward, next_state, record, done, closed_window })
    }

    fn close_window(&mut self) -> Result<Vec<TrustBreakdown>, EnvError> {
        let rows = self.trust.close_window(&self.stats)?;
        self.stats.reset();
        self.window_steps = 0;
        self.log.reputation_trace.push(self.trust.reputations().to_vec());
        self.log
            .selection_trace
            .push(std::mem::replace(&mut self.window_selection, vec![0; self.cfg.oracle_count()]));
        self.log.trust_rows.extend(rows.iter().cloned());
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BehaviorClass, ScenarioConfig};

    fn oracle(oid: usize, class: BehaviorClass) -> OracleProfile {
        OracleProfile {
            oid,
            cost: 0.5,
            performance: 1000.0,
            service_class: 0,
            stake: 100.0,
            behavior_class: class,
            attack_policy: None,
        }
    }

    fn request(rid: u64, arrival: f64, complexity: f64) -> DataRequest {
        DataRequest { rid, arrival_ts: arrival, ddl: 10.0, complexity, service_class: 0 }
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = ScenarioConfig::default();
        let a = generate_requests(&cfg, &mut StdRng::seed_from_u64(42)).unwrap();
        let b = generate_requests(&cfg, &mut StdRng::seed_from_u64(42)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn complexity_mean_within_standard_error() {
        let cfg = ScenarioConfig::default();
        let reqs = generate_requests(&cfg, &mut StdRng::seed_from_u64(42)).unwrap();
        assert_eq!(reqs.len(), 6000);
        let mean = reqs.iter().map(|r| r.complexity).sum::<f64>() / 6000.0;
        let bound = 3.0 * 500.0 / 6000f64.sqrt();
        assert!((mean - 6000.0).abs() <= bound, "mean {mean}");
        assert!(reqs.windows(2).all(|w| w[1].arrival_ts >= w[0].arrival_ts));
    }

    #[test]
    fn zero_rate_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.requests.arrival_rate = 0.0;
        let err = generate_requests(&cfg, &mut StdRng::seed_from_u64(1)).unwrap_err();
        assert!(err.to_string().contains("arrival rate must be positive"));
    }

    #[test]
    fn trusted_never_severe_without_noise() {
        let cfg = BehaviorConfig::default();
        let p = oracle(0, BehaviorClass::Trusted);
        let mut rng = StdRng::seed_from_u64(9);
        let severe = (0..10_000)
            .filter(|_| {
                sample_behavior(&p, 1, 0.5, 0.0, -1.5, &cfg, &mut rng) == BehaviorLevel::SevereHarm
            })
            .count();
        assert_eq!(severe, 0);
    }

    #[test]
    fn full_noise_is_uniform() {
        let cfg = BehaviorConfig::default();
        let p = oracle(0, BehaviorClass::Malicious);
        let mut rng = StdRng::seed_from_u64(10);
        let mut counts = [0i64; 4];
        for _ in 0..10_000 {
            counts[sample_behavior(&p, 1, 0.5, 1.0, -1.5, &cfg, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c - 2500).abs() <= 150, "{counts:?}");
        }
    }

    #[test]
    fn dispatch_examples() {
        let mut q = QueueBank::new(1);
        let p = oracle(0, BehaviorClass::Trusted);
        let a = q.dispatch(&request(0, 0.0, 6000.0), &p, BehaviorLevel::Safe, true, 1.5).unwrap();
        assert_eq!(a.exe_time, 6.0);
        assert_eq!(a.response_time, 6.0);
        let b = q.dispatch(&request(1, 1.0, 6000.0), &p, BehaviorLevel::Safe, true, 1.5).unwrap();
        assert_eq!(b.start_ts, a.finish_ts);
        assert_eq!(b.response_time, 11.0);
        assert!(!b.success, "missed its 10 s deadline");
        let c = q.dispatch(&request(2, 100.0, 6000.0), &p, BehaviorLevel::MinorHarm, true, 1.5).unwrap();
        assert_eq!(c.exe_time, 9.0);
        let bad = oracle(3, BehaviorClass::Trusted);
        assert!(q.dispatch(&request(3, 0.0, 1.0), &bad, BehaviorLevel::Safe, true, 1.5).is_err());
    }

    #[test]
    fn severe_harm_never_verifies() {
        let cfg = BehaviorConfig::default();
        let mut rng = StdRng::seed_from_u64(1);
        assert!((0..1000).all(|_| !verify(BehaviorLevel::SevereHarm, &cfg, &mut rng)));
        assert!((0..1000).all(|_| verify(BehaviorLevel::Safe, &cfg, &mut rng)));
        let fails = (0..10_000).filter(|_| !verify(BehaviorLevel::ModerateHarm, &cfg, &mut rng)).count();
        assert!((fails as i64 - 7000).abs() < 150, "{fails}");
    }

    fn record(cost: f64, exe: f64, response: f64, matched: bool) -> ServiceRecord {
        ServiceRecord {
            rid: 0,
            oid: 0,
            requested_oid: 0,
            window: 1,
            arrival_ts: 0.0,
            start_ts: response - exe,
            finish_ts: response,
            exe_time: exe,
            response_time: response,
            behavior: BehaviorLevel::Safe,
            verified: true,
            success: true,
            cost,
            service_matched: matched,
            redirected: false,
        }
    }

    #[test]
    fn reward_examples() {
        let w = RewardConfig::default();
        let r = compute_reward(&record(1.5, 6.0, 6.0, true), 0.5, &w);
        assert!((r - 4.0).abs() < 1e-12, "{r}");
        let r = compute_reward(&record(1.5, 6.0, 6.0, false), 0.5, &w);
        assert!(r.abs() < 1e-12, "{r}");
        let r = compute_reward(&record(1.5, 6.0, 12.0, true), 0.5, &w);
        assert!((r - 2.25).abs() < 1e-12, "{r}");
    }

    #[test]
    fn state_vector_layout() {
        let env = OracleEnv::new(ScenarioConfig::default(), 1).unwrap();
        let s = env.observe().unwrap();
        assert_eq!(s.features.len(), 95);
        assert_eq!(env.observe().unwrap().features, s.features);
        for (j, o) in s.oracles.iter().enumerate() {
            assert_eq!(o.reputation, env.trust().reputation(j));
            assert_eq!(s.features[5 + j * ORACLE_FEATURES], o.reputation / REPUTATION_CLIP);
        }
        assert!(s.features.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn step_rejects_bad_action() {
        let mut env = OracleEnv::new(ScenarioConfig::default(), 1).unwrap();
        assert!(matches!(env.step(15), Err(EnvError::ActionOutOfRange { .. })));
    }

    #[test]
    fn windows_close_on_schedule() {
        let mut cfg = ScenarioConfig::default();
        cfg.requests.count = 250;
        let mut env = OracleEnv::new(cfg, 3).unwrap();
        let mut closes = Vec::new();
        let mut t = 0;
        while !env.is_done() {
            let out = env.step(t % 15).unwrap();
            if let Some(rows) = out.closed_window {
                assert_eq!(rows.len(), 15);
                closes.push(t + 1);
            }
            t += 1;
        }
        assert_eq!(closes, vec![120, 240, 250]);
        assert_eq!(env.log().reputation_trace.len(), 3);
    }

    #[test]
    fn redirect_under_enforcement() {
        let mut cfg = ScenarioConfig::default();
        cfg.trust.enforce_threshold = true;
        cfg.requests.count = 400;
        cfg.window.requests_per_window = 20;
        cfg.oracles[0].behavior_class = BehaviorClass::Malicious;
        cfg.behavior.malicious = BehaviorDistribution([0.0, 0.0, 0.0, 1.0]);
        let mut env = OracleEnv::new(cfg, 5).unwrap();
        // feed oracle 0 until it is barred, then keep asking for it
        let mut redirected = 0;
        while !env.is_done() {
            let barred = !env.trust().is_trusted(0);
            let out = env.step(0).unwrap();
            if barred {
                assert!(out.record.redirected);
                assert_ne!(out.record.oid, 0);
                let trusted_rep = env.trust().reputation(out.record.oid);
                assert!(trusted_rep.is_finite());
                redirected += 1;
            } else {
                assert!(!out.record.redirected);
            }
        }
        assert!(redirected > 0);
    }

    #[test]
    fn redirect_penalizes_learning_signal() {
        let mut cfg = ScenarioConfig::default();
        cfg.trust.enforce_threshold = true;
        cfg.trust.threshold = 10.0; // nobody trusted: no redirect possible
        cfg.requests.count = 10;
        let mut env = OracleEnv::new(cfg.clone(), 5).unwrap();
        let out = env.step(2).unwrap();
        assert!(!out.record.redirected);

        cfg.trust.threshold = 0.4; // everybody starts at 0.5
        cfg.trust.initial_reputation = 0.5;
        let mut env = OracleEnv::new(cfg, 5).unwrap();
        let out = env.step(2).unwrap();
        assert!(!out.record.redirected);
        let expected = compute_reward(&out.record, 0.5, &env.config().reward);
        assert_eq!(out.reward, expected);
    }
}
