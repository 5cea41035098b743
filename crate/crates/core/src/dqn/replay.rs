//! Bounded FIFO experience replay.

use std::collections::VecDeque;

use rand::seq::index;

use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
    counter: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            counter: 0,
        }
    }

    /// Appends `t`, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
        self.counter += 1;
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total pushes so far, including evicted transitions.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// `batch` distinct transitions drawn uniformly (all of them if fewer are stored).
    pub fn sample(&self, rng: &mut SimRng, batch: usize) -> Vec<&Transition> {
        let n = batch.min(self.buffer.len());
        index::sample(rng, self.buffer.len(), n)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn t(r: f64) -> Transition {
        Transition {
            s: vec![r],
            a: 0,
            r,
            s_next: vec![r],
        }
    }

    #[test]
    fn fifo_eviction() {
        let cap = 5;
        let mut mem = ReplayMemory::new(cap);
        for i in 0..(cap + 3) {
            mem.push(t(i as f64));
            assert!(mem.len() <= cap);
        }
        assert_eq!(mem.counter(), 8);
        let kept: Vec<f64> = mem.iter().map(|x| x.r).collect();
        assert_eq!(kept, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let mut mem = ReplayMemory::new(100);
        for i in 0..50 {
            mem.push(t(i as f64));
        }
        let mut a = rng::stream(1, rng::streams::REPLAY);
        let mut b = rng::stream(1, rng::streams::REPLAY);
        let sa: Vec<f64> = mem.sample(&mut a, 10).iter().map(|x| x.r).collect();
        let sb: Vec<f64> = mem.sample(&mut b, 10).iter().map(|x| x.r).collect();
        assert_eq!(sa, sb);
        let mut sorted = sa.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
        assert_eq!(mem.sample(&mut a, 80).len(), 50);
    }
}
