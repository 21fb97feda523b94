use rand::Rng;

use crate::error::{Error, Result};

/// One stored team transition. Observations are the concatenation of every
/// agent's observation, in agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub signal: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.inserted += 1;
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Distinct indices drawn uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < batch || batch == 0 {
            return Err(Error::NotReady {
                have: self.items.len(),
                need: batch.max(1),
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch).into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: usize) -> Transition {
        Transition {
            obs: vec![i as f64],
            signal: vec![],
            actions: vec![0],
            rewards: vec![0.0],
            next_obs: vec![i as f64 + 1.0],
            done: false,
        }
    }

    #[test]
    fn empty_buffer_is_not_ready() {
        let buf = ReplayBuffer::new(10);
        assert!(matches!(
            buf.sample_indices(4, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NotReady { have: 0, .. })
        ));
    }

    #[test]
    fn evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(t(i));
        }
        let mut seen: Vec<f64> = (0..3).map(|i| buf.get(i).obs[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![2.0, 3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn bounded_and_duplicate_free(cap in 1usize..64, n in 0usize..200, batch in 1usize..64, seed in 0u64..1000) {
            let mut buf = ReplayBuffer::new(cap);
            for i in 0..n {
                buf.push(t(i));
                prop_assert!(buf.len() <= cap);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Ok(mut idx) = buf.sample_indices(batch, &mut rng) {
                prop_assert_eq!(idx.len(), batch);
                idx.sort_unstable();
                idx.dedup();
                prop_assert_eq!(idx.len(), batch);
                prop_assert!(idx.iter().all(|&i| i < buf.len()));
            } else {
                prop_assert!(buf.len() < batch);
            }
        }
    }
}
