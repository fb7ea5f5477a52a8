use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};

use super::{AgentError, Selector};
use crate::domain::RewardConfig;
use crate::env::{reward_terms, EnvState, StepOutcome};

/// Cycles through oracles in index order.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Selector for RoundRobin {
    fn name(&self) -> &'static str {
        "round-robin"
    }

    fn select(&mut self, state: &EnvState) -> Result<usize, AgentError> {
        let m = state.oracle_count();
        let pick = self.next % m;
        self.next = (pick + 1) % m;
        Ok(pick)
    }
}

/// Beta posteriors over verification success, plus observed mean cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BlorState {
    /// `(alpha, beta)` = (successes + 1, failures + 1).
    pub posteriors: Vec<(f64, f64)>,
    pub mean_cost: Vec<f64>,
    pub observations: Vec<u64>,
}

impl BlorState {
    pub fn new(oracles: usize) -> Self {
        Self {
            posteriors: vec![(1.0, 1.0); oracles],
            mean_cost: vec![0.0; oracles],
            observations: vec![0; oracles],
        }
    }

    pub fn update(&mut self, oid: usize, success: bool, cost: f64) {
        let (a, b) = &mut self.posteriors[oid];
        if success {
            *a += 1.0;
        } else {
            *b += 1.0;
        }
        let n = &mut self.observations[oid];
        *n += 1;
        self.mean_cost[oid] += (cost - self.mean_cost[oid]) / *n as f64;
    }

    pub fn posterior_mean(&self, oid: usize) -> f64 {
        let (a, b) = self.posteriors[oid];
        a / (a + b)
    }
}

/// Thompson-sampling bandit scored by `sample / cost`, after one
/// round-robin pass over every oracle.
#[derive(Debug, Clone)]
pub struct Blor {
    state: BlorState,
    warmup: RoundRobin,
    warmup_left: usize,
    rng: StdRng,
}

impl Blor {
    pub fn new(oracles: usize, seed: u64) -> Self {
        Self::with_state(BlorState::new(oracles), oracles, seed)
    }

    /// Start from given posteriors. `warmup` is the number of round-robin
    /// picks before sampling starts.
    pub fn with_state(state: BlorState, warmup: usize, seed: u64) -> Self {
        Self {
            state,
            warmup: RoundRobin::new(),
            warmup_left: warmup,
            rng: StdRng::seed_from_u64(seed),
        }
    }

    pub fn state(&self) -> &BlorState {
        &self.state
    }
}

impl Selector for Blor {
    fn name(&self) -> &'static str {
        "blor"
    }

    fn select(&mut self, state: &EnvState) -> Result<usize, AgentError> {
        if self.warmup_left > 0 {
            self.warmup_left -= 1;
            return self.warmup.select(state);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, o) in state.oracles.iter().enumerate() {
            let (a, b) = self.state.posteriors[j];
            let sample = Beta::new(a, b).expect("posterior parameters >= 1").sample(&mut self.rng);
            let cost = if self.state.observations[j] > 0 { self.state.mean_cost[j] } else { o.cost };
            let score = sample / cost.max(f64::MIN_POSITIVE);
            if score > best.1 {
                best = (j, score);
            }
        }
        Ok(best.0)
    }

    fn observe(&mut self, _: &EnvState, _: usize, outcome: &StepOutcome) -> Result<(), AgentError> {
        let r = &outcome.record;
        self.state.update(r.oid, r.success, r.cost);
        Ok(())
    }
}

/// Oracles whose reward, predicted from the current state, is positive.
pub fn psg_predict_positive(state: &EnvState, weights: &RewardConfig) -> Vec<usize> {
    state
        .oracles
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let exe = state.request.complexity / o.performance;
            let ratio = exe / (o.wait + exe);
            let matched = o.service_class == state.request.service_class;
            reward_terms(o.cost, ratio, o.reputation, matched, weights) > 0.0
        })
        .map(|(j, _)| j)
        .collect()
}

/// Probabilistic semi-greedy: uniform pick among the `q` cheapest oracles
/// with positive predicted reward.
#[derive(Debug, Clone)]
pub struct Psg {
    q: usize,
    weights: RewardConfig,
    rng: StdRng,
    fallbacks: u64,
}

impl Psg {
    pub fn new(q: usize, weights: RewardConfig, seed: u64) -> Self {
        assert!(q >= 1, "q must be at least 1");
        Self { q, weights, rng: StdRng::seed_from_u64(seed), fallbacks: 0 }
    }

    /// Times the positive set was empty and the cheapest oracle was used.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// Cheapest-first shortlist (at most `q`) of the positive set.
    pub fn shortlist(&self, state: &EnvState) -> Vec<usize> {
        let mut pos = psg_predict_positive(state, &self.weights);
        pos.sort_by(|&a, &b| state.oracles[a].cost.total_cmp(&state.oracles[b].cost).then(a.cmp(&b)));
        pos.truncate(self.q);
        pos
    }
}

fn cheapest(state: &EnvState) -> usize {
    let mut best = 0;
    for (j, o) in state.oracles.iter().enumerate() {
        if o.cost < state.oracles[best].cost {
            best = j;
        }
    }
    best
}

impl Selector for Psg {
    fn name(&self) -> &'static str {
        "psg"
    }

    fn select(&mut self, state: &EnvState) -> Result<usize, AgentError> {
        let list = self.shortlist(state);
        if list.is_empty() {
            self.fallbacks += 1;
            return Ok(cheapest(state));
        }
        Ok(list[self.rng.gen_range(0..list.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{encode_state, OracleView, RequestView};

    fn state(oracles: Vec<OracleView>) -> EnvState {
        let request = RequestView { complexity: 6000.0, ddl: 10.0, service_class: 0 };
        let features = encode_state(&request, &oracles, 1);
        EnvState { clock: 0.0, request, oracles, classes: 1, features }
    }

    fn view(rep: f64, cost: f64) -> OracleView {
        OracleView { reputation: rep, cost, wait: 0.0, performance: 1000.0, service_class: 0, trusted: rep >= -1.5 }
    }

    #[test]
    fn round_robin_is_fair() {
        let s = state((0..15).map(|_| view(0.5, 0.5)).collect());
        let mut rr = RoundRobin::new();
        let mut counts = [0; 15];
        for _ in 0..6000 {
            counts[rr.select(&s).unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| c == 400));
    }

    #[test]
    fn beta_updates() {
        let mut b = BlorState::new(2);
        b.update(0, true, 0.5);
        assert_eq!(b.posteriors[0], (2.0, 1.0));
        let mut b = BlorState::new(1);
        for _ in 0..100 {
            b.update(0, true, 0.4);
        }
        assert!((b.posterior_mean(0) - 101.0 / 102.0).abs() < 1e-12);
        assert!((b.mean_cost[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn thompson_concentrates() {
        let mut st = BlorState::new(2);
        st.posteriors = vec![(100.0, 1.0), (1.0, 100.0)];
        let mut blor = Blor::with_state(st, 0, 4);
        let s = state(vec![view(0.5, 0.5), view(0.5, 0.5)]);
        let first = (0..1000).filter(|_| blor.select(&s).unwrap() == 0).count();
        assert!(first > 950, "{first}");
    }

    #[test]
    fn blor_warms_up_round_robin() {
        let s = state((0..5).map(|_| view(0.5, 0.5)).collect());
        let mut blor = Blor::new(5, 1);
        let picks: Vec<usize> = (0..5).map(|_| blor.select(&s).unwrap()).collect();
        assert_eq!(picks, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn psg_filters_by_predicted_reward() {
        let w = RewardConfig::default();
        let s = state(vec![view(0.5, 0.5), view(-40.0, 0.1), view(0.5, 0.9)]);
        assert_eq!(psg_predict_positive(&s, &w), vec![0, 2]);
        let s = state(vec![view(-100.0, 0.5), view(-100.0, 0.2)]);
        assert!(psg_predict_positive(&s, &w).is_empty());
        let mut p = Psg::new(3, w, 1);
        assert_eq!(p.select(&s).unwrap(), 1);
        assert_eq!(p.fallbacks(), 1);
    }

    #[test]
    fn psg_picks_from_cheapest_q() {
        let w = RewardConfig::default();
        let costs = [0.9, 0.2, 0.7, 0.3, 0.1, 0.8];
        let s = state(costs.iter().map(|&c| view(0.5, c)).collect());
        let mut p = Psg::new(3, w, 2);
        assert_eq!(p.shortlist(&s), vec![4, 1, 3]);
        for _ in 0..200 {
            assert!([4, 1, 3].contains(&p.select(&s).unwrap()));
        }
    }
}
