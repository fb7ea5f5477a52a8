use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::replay::{ReplayMemory, Transition};
use super::{AgentError, Selector};
use crate::domain::DqnConfig;
use crate::env::{EnvState, StepOutcome};
use crate::nn::{Gradients, Mlp};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Plain DQN: evaluation net, periodically synced target net, uniform
/// experience replay, multiplicative epsilon decay.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    eval: Mlp,
    target: Mlp,
    cfg: DqnConfig,
    epsilon: f64,
    memory: ReplayMemory,
    rng: StdRng,
    steps: u64,
    learn_steps: u64,
    training: bool,
    last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(cfg: &DqnConfig, state_len: usize, actions: usize, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut sizes = vec![state_len];
        sizes.extend(&cfg.hidden);
        sizes.push(actions);
        let eval = Mlp::new(&sizes, &mut rng);
        Self::assemble(eval, cfg, rng)
    }

    /// Wrap a trained network. The agent starts frozen (greedy, no learning).
    pub fn from_network(net: Mlp, cfg: &DqnConfig, seed: u64) -> Self {
        let mut agent = Self::assemble(net, cfg, StdRng::seed_from_u64(seed));
        agent.epsilon = cfg.epsilon_floor;
        agent.training = false;
        agent
    }

    fn assemble(eval: Mlp, cfg: &DqnConfig, rng: StdRng) -> Self {
        Self {
            target: eval.clone(),
            eval,
            epsilon: cfg.epsilon_start.clamp(cfg.epsilon_floor, 1.0),
            memory: ReplayMemory::new(cfg.replay_capacity),
            cfg: cfg.clone(),
            rng,
            steps: 0,
            learn_steps: 0,
            training: true,
            last_loss: None,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.eval
    }

    pub fn target_network(&self) -> &Mlp {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Frozen agents act greedily and ignore feedback.
    pub fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    /// Restart exploration from `epsilon` (clamped to the floor).
    pub fn reset_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(self.cfg.epsilon_floor, 1.0);
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.eval.forward(features)?)
    }

    /// Epsilon-greedy when training, greedy otherwise.
    pub fn act(&mut self, features: &[f64]) -> Result<usize, AgentError> {
        let q = self.q_values(features)?;
        if self.training && self.rng.gen::<f64>() < self.epsilon {
            return Ok(self.rng.gen_range(0..q.len()));
        }
        Ok(argmax(&q))
    }

    pub fn store_transition(&mut self, t: Transition) {
        self.memory.push(t);
    }

    /// One minibatch update if `t` is a learning step and the memory holds a
    /// full batch. Returns the batch loss when an update happened.
    pub fn learn_step(&mut self, t: u64) -> Result<Option<f64>, AgentError> {
        let f = self.cfg.learn_every.max(1) as u64;
        if self.memory.len() < self.cfg.batch_size.max(1) || !t.is_multiple_of(f) {
            return Ok(None);
        }
        let batch: Vec<Transition> = self
            .memory
            .sample(self.cfg.batch_size, &mut self.rng)
            .into_iter()
            .cloned()
            .collect();
        let mut total = Gradients::zeros_like(&self.eval);
        let mut loss = 0.0;
        for tr in &batch {
            let target = match &tr.next_state {
                Some(next) => {
                    let q_next = self.target.forward(next)?;
                    tr.reward + self.cfg.discount * q_next[argmax(&q_next)]
                }
                None => tr.reward,
            };
            let trace = self.eval.forward_trace(&tr.state)?;
            let td = trace.output()[tr.action] - target;
            loss += 0.5 * td * td;
            let mut grad = vec![0.0; trace.output().len()];
            grad[tr.action] = td.clamp(-self.cfg.td_clip, self.cfg.td_clip);
            total.add(&self.eval.backward(&trace, &grad));
        }
        let n = batch.len() as f64;
        loss /= n;
        if !loss.is_finite() {
            return Err(AgentError::NonFiniteLoss { learn_step: self.learn_steps + 1, loss });
        }
        total.scale(1.0 / n);
        self.eval.apply_update(&total, self.cfg.learning_rate);
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_floor);
        self.learn_steps += 1;
        if self.learn_steps.is_multiple_of(self.cfg.target_sync.max(1) as u64) {
            self.target.copy_from(&self.eval);
        }
        self.last_loss = Some(loss);
        Ok(Some(loss))
    }
}

impl Selector for DqnAgent {
    fn name(&self) -> &'static str {
        "tco-drl"
    }

    fn select(&mut self, state: &EnvState) -> Result<usize, AgentError> {
        self.act(&state.features)
    }

    fn observe(
        &mut self,
        state: &EnvState,
        action: usize,
        outcome: &StepOutcome,
    ) -> Result<(), AgentError> {
        if !self.training {
            return Ok(());
        }
        self.store_transition(Transition {
            state: state.features.clone(),
            action,
            reward: outcome.reward,
            next_state: outcome.next_state.as_ref().map(|s| s.features.clone()),
        });
        self.steps += 1;
        self.learn_step(self.steps)?;
        Ok(())
    }
}
