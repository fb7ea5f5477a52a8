use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

/// One `(state, action, reward, next state)` tuple. `next_state` is `None`
/// for terminal transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<Vec<f64>>,
}

/// Fixed-capacity FIFO experience buffer.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buf: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, buf: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Append, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// Up to `n` distinct transitions, uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        index::sample(rng, self.buf.len(), n.min(self.buf.len()))
            .into_iter()
            .map(|i| &self.buf[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn t(i: usize) -> Transition {
        Transition { state: vec![i as f64], action: i, reward: i as f64, next_state: None }
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut m = ReplayMemory::new(800);
        for i in 0..801 {
            m.push(t(i));
        }
        assert_eq!(m.len(), 800);
        assert_eq!(m.iter().next().unwrap().action, 1);
        assert_eq!(m.iter().last().unwrap().action, 800);
        let order: Vec<usize> = m.iter().map(|x| x.action).collect();
        assert_eq!(order, (1..801).collect::<Vec<_>>());
    }

    #[test]
    fn sample_reaches_stored() {
        let mut m = ReplayMemory::new(4);
        let mut rng = StdRng::seed_from_u64(0);
        assert!(m.sample(1, &mut rng).is_empty());
        m.push(t(7));
        assert_eq!(m.sample(1, &mut rng), vec![&t(7)]);
        assert_eq!(m.sample(30, &mut rng).len(), 1);
    }
}
