//! Fixed-capacity ring of joint transitions with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

/// One joint step. Observations and actions are the per-robot vectors
/// concatenated in robot order.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<f64>,
    /// Executed (post-safety) actions.
    pub actions: Vec<f64>,
    pub reward: f64,
    pub next_observations: Vec<f64>,
    /// Episode ended in coverage; time limits are not terminal.
    pub terminal: bool,
}

/// Row-stacked transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_observations: Array2<f64>,
    /// 1.0 for terminal rows.
    pub terminal: Array1<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(rows: &[&Transition]) -> Self {
        assert!(!rows.is_empty(), "empty minibatch");
        let (od, ad) = (rows[0].observations.len(), rows[0].actions.len());
        let b = rows.len();
        let mut observations = Array2::zeros((b, od));
        let mut next_observations = Array2::zeros((b, od));
        let mut actions = Array2::zeros((b, ad));
        for (i, t) in rows.iter().enumerate() {
            observations.row_mut(i).assign(&ndarray::ArrayView1::from(&t.observations));
            next_observations.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_observations));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.actions));
        }
        Self {
            observations,
            actions,
            rewards: rows.iter().map(|t| t.reward).collect(),
            next_observations,
            terminal: rows.iter().map(|t| if t.terminal { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.head };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `size` draws with replacement, uniform over current contents.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, size: usize) -> Minibatch {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        let rows: Vec<&Transition> = (0..size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Minibatch::from_transitions(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(k: usize) -> Transition {
        Transition {
            observations: vec![k as f64, 0.5],
            actions: vec![-(k as f64)],
            reward: k as f64,
            next_observations: vec![k as f64 + 1.0, 0.5],
            terminal: k.is_multiple_of(2),
        }
    }

    #[test]
    fn ring_drops_oldest() {
        let mut buf = ReplayBuffer::new(5);
        for k in 0..8 {
            buf.push(tagged(k));
        }
        assert_eq!(buf.len(), 5);
        assert_eq!(buf.pushed(), 8);
        let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn minibatch_rows_are_whole_transitions() {
        let mut buf = ReplayBuffer::new(10);
        for k in 0..10 {
            buf.push(tagged(k));
        }
        let mb = buf.sample(&mut ChaCha8Rng::seed_from_u64(1), 32);
        assert_eq!(mb.len(), 32);
        for i in 0..32 {
            let k = mb.rewards[i];
            assert_eq!(mb.observations[[i, 0]], k);
            assert_eq!(mb.actions[[i, 0]], -k);
            assert_eq!(mb.next_observations[[i, 0]], k + 1.0);
            assert_eq!(mb.terminal[i], if (k as usize).is_multiple_of(2) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(4);
        for k in 0..4 {
            buf.push(tagged(k));
        }
        let mb = buf.sample(&mut ChaCha8Rng::seed_from_u64(2), 40_000);
        let mut counts = [0usize; 4];
        for r in mb.rewards.iter() {
            counts[*r as usize] += 1;
        }
        // Binomial std is about 87 per bucket.
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 450.0, "{counts:?}");
        }
    }
}
