//! Transition storage shared by the whole population.
//!
//! A fixed-capacity FIFO ring: once full, every push evicts the oldest
//! transition. Sampling is uniform with replacement and never mutates.

use crate::error::{Error, Result};
use crate::seeding::Rng;
use rand::Rng as _;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub r: f64,
    pub done: bool,
    /// Diagnostic label of the policy that produced the step; trainers ignore it.
    pub tag: Option<u32>,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: Vec<f64>, s_next: Vec<f64>, r: f64, done: bool) -> Self {
        Transition {
            s,
            a,
            s_next,
            r,
            done,
            tag: None,
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        self.s
            .iter()
            .chain(&self.a)
            .chain(&self.s_next)
            .chain(std::iter::once(&self.r))
            .position(|v| !v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    write_cursor: usize,
    total_pushed: u64,
    dropped: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::spec("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::new(),
            write_cursor: 0,
            total_pushed: 0,
            dropped: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Transitions accepted since construction, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    /// Transitions rejected for carrying non-finite values.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Appends in order. Non-finite transitions are dropped and counted; the
    /// rest of the sequence is still stored and the first fault is returned.
    pub fn push<I>(&mut self, transitions: I) -> Result<()>
    where
        I: IntoIterator<Item = Transition>,
    {
        let mut fault = None;
        for t in transitions {
            if let Some(index) = t.first_non_finite() {
                self.dropped += 1;
                fault.get_or_insert(Error::NumericFault {
                    context: "transition",
                    index,
                });
                continue;
            }
            if self.storage.len() < self.capacity {
                self.storage.push(t);
            } else {
                self.storage[self.write_cursor] = t;
            }
            self.write_cursor = (self.write_cursor + 1) % self.capacity;
            self.total_pushed += 1;
        }
        fault.map_or(Ok(()), Err)
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let len = self.storage.len();
        Ok((0..n).map(|_| &self.storage[rng.random_range(0..len)]).collect())
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.write_cursor
        };
        self.storage[split..].iter().chain(&self.storage[..split])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{stream, Purpose};
    use proptest::prelude::*;

    fn tr(id: f64) -> Transition {
        Transition::new(vec![id], vec![0.0], vec![id + 1.0], id, false)
    }

    fn ids(buf: &ReplayBuffer) -> Vec<f64> {
        buf.iter_ordered().map(|t| t.r).collect()
    }

    #[test]
    fn push_counts() {
        let mut b = ReplayBuffer::new(1000).unwrap();
        b.push((0..100).map(|i| tr(i as f64))).unwrap();
        assert_eq!(b.len(), 100);
    }

    #[test]
    fn fifo_eviction_keeps_latest() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push((1..=25).map(|i| tr(i as f64))).unwrap();
        assert_eq!(ids(&b), (16..=25).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(b.total_pushed(), 25);
    }

    #[test]
    fn batch_of_population_transitions_grows_by_exactly_b_times_t() {
        let (b_pop, t_len) = (33, 100);
        let mut b = ReplayBuffer::new(100_000).unwrap();
        b.push((0..500).map(|i| tr(i as f64))).unwrap();
        let before = b.len();
        b.push((0..b_pop * t_len).map(|i| tr(i as f64))).unwrap();
        assert_eq!(b.len() - before, b_pop * t_len);
    }

    #[test]
    fn full_turnover_leaves_nothing_old() {
        let mut b = ReplayBuffer::new(50).unwrap();
        b.push((0..50).map(|_| tr(-1.0))).unwrap();
        b.push((0..50).map(|i| tr(i as f64))).unwrap();
        assert!(b.iter_ordered().all(|t| t.r >= 0.0));
    }

    #[test]
    fn non_finite_transitions_are_dropped_and_counted() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut bad = tr(2.0);
        bad.s_next[0] = f64::NAN;
        let err = b.push(vec![tr(1.0), bad, tr(3.0)]).unwrap_err();
        assert!(matches!(err, Error::NumericFault { index: 2, .. }));
        assert_eq!(ids(&b), vec![1.0, 3.0]);
        assert_eq!(b.dropped(), 1);
    }

    #[test]
    fn sampling_edge_cases() {
        let mut rng = stream(0, Purpose::Check, 0, 0);
        let empty = ReplayBuffer::new(4).unwrap();
        assert!(matches!(empty.sample(3, &mut rng), Err(Error::EmptyBuffer)));
        let mut one = ReplayBuffer::new(4).unwrap();
        one.push([tr(7.0)]).unwrap();
        let s = one.sample(5, &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|t| t.r == 7.0));
        assert!(one.sample(0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push((0..10).map(|i| tr(i as f64))).unwrap();
        let mut rng = stream(1, Purpose::Check, 0, 0);
        // 10x the nominal draw count keeps the 2% relative band above 6 standard errors.
        let n = 1_000_000;
        let mut counts = [0usize; 10];
        for t in b.sample(n, &mut rng).unwrap() {
            counts[t.r as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.1).abs() < 0.02 * 0.1, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn contents_equal_last_capacity_pushes(
            capacity in 1usize..20,
            chunks in prop::collection::vec(0usize..15, 0..8),
        ) {
            let mut b = ReplayBuffer::new(capacity).unwrap();
            let mut log = Vec::new();
            let mut next = 0.0;
            for c in chunks {
                let batch: Vec<_> = (0..c).map(|_| { next += 1.0; tr(next) }).collect();
                log.extend(batch.iter().map(|t| t.r));
                b.push(batch).unwrap();
                let mut rng = stream(0, Purpose::Check, 0, 0);
                let before = ids(&b);
                if !b.is_empty() {
                    let _ = b.sample(7, &mut rng).unwrap();
                }
                prop_assert_eq!(before, ids(&b));
            }
            let keep = log.len().saturating_sub(capacity);
            prop_assert_eq!(ids(&b), log[keep..].to_vec());
            prop_assert_eq!(b.len(), log.len().min(capacity));
        }
    }
}
