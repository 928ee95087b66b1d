use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Endless stream of index batches over `len` examples.
///
/// Each epoch is a fresh permutation keyed by `(seed, epoch)`; the final
/// batch of an epoch may be short. The stream cycles forever.
#[derive(Clone, Debug)]
pub struct Batcher {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl Batcher {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::Config("cannot batch an empty split".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut b = Self {
            len,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        b.shuffle();
        Ok(b)
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.epoch);
        self.order = (0..self.len).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }
}

impl Iterator for Batcher {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.len {
            self.epoch += 1;
            self.shuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.len);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_batches_cover_epoch() {
        let b = Batcher::new(7, 1, 3).unwrap();
        assert_eq!(b.batches_per_epoch(), 7);
        let mut seen: Vec<usize> = b.take(7).flatten().collect();
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_order() {
        let a: Vec<_> = Batcher::new(10, 3, 5).unwrap().take(12).collect();
        let b: Vec<_> = Batcher::new(10, 3, 5).unwrap().take(12).collect();
        assert_eq!(a, b);
        let c: Vec<_> = Batcher::new(10, 3, 6).unwrap().take(12).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn cycles_with_new_permutations() {
        let mut b = Batcher::new(4, 4, 1).unwrap();
        let first = b.next().unwrap();
        let mut later = Vec::new();
        for _ in 0..20 {
            let batch = b.next().unwrap();
            assert_eq!(batch.len(), 4);
            later.push(batch);
        }
        assert_eq!(b.epoch(), 20);
        assert!(later.iter().any(|x| *x != first));
    }

    #[test]
    fn short_final_batch() {
        let sizes: Vec<usize> = Batcher::new(5, 2, 0).unwrap().take(6).map(|b| b.len()).collect();
        assert_eq!(sizes, [2, 2, 1, 2, 2, 1]);
    }

    #[test]
    fn empty_split_rejected() {
        assert!(Batcher::new(0, 2, 0).is_err());
        assert!(Batcher::new(3, 0, 0).is_err());
    }
}
