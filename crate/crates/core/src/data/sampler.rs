use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClipRecord;
use crate::error::{invalid, Error, Result};

/// Produces mini-batches of record indices.
pub trait Sampler {
    fn next_batch(&mut self, batch_size: usize) -> Vec<usize>;
}

/// Class round-robin over per-class shuffled clip lists.
///
/// Every non-empty class is visited once per cycle in a freshly shuffled
/// order; each visit emits the class's next clip. A class list is reshuffled
/// when its cursor wraps. A multi-label clip counts for whichever class
/// picked it.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    classes: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    order: Vec<usize>,
    order_pos: usize,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(records: &[ClipRecord], seed: u64) -> Result<Self> {
        let targets: Vec<&[f32]> = records.iter().map(|r| r.target.as_slice()).collect();
        Self::from_targets(&targets, seed)
    }

    /// Builds class lists from multi-hot targets (`> 0.5` counts as a label).
    pub fn from_targets<V: AsRef<[f32]>>(targets: &[V], seed: u64) -> Result<Self> {
        let k = targets.first().map_or(0, |t| t.as_ref().len());
        let mut lists = vec![Vec::new(); k];
        for (i, t) in targets.iter().enumerate() {
            for (c, &v) in t.as_ref().iter().enumerate() {
                if v > 0.5 {
                    lists[c].push(i);
                }
            }
        }
        Self::from_class_lists(lists, seed)
    }

    /// `lists[c]` holds the clips labeled with class `c`.
    pub fn from_class_lists(lists: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut classes: Vec<Vec<usize>> = lists.into_iter().filter(|l| !l.is_empty()).collect();
        if classes.is_empty() {
            return Err(Error::Data("balanced sampler: no class has any clip".into()));
        }
        for l in &mut classes {
            l.shuffle(&mut rng);
        }
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.shuffle(&mut rng);
        Ok(BalancedSampler {
            cursors: vec![0; classes.len()],
            classes,
            order,
            order_pos: 0,
            rng,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn next_index(&mut self) -> usize {
        if self.order_pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.order_pos = 0;
        }
        let c = self.order[self.order_pos];
        self.order_pos += 1;
        if self.cursors[c] == self.classes[c].len() {
            self.classes[c].shuffle(&mut self.rng);
            self.cursors[c] = 0;
        }
        let clip = self.classes[c][self.cursors[c]];
        self.cursors[c] += 1;
        clip
    }
}

impl Sampler for BalancedSampler {
    fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size).map(|_| self.next_index()).collect()
    }
}

/// Unbalanced baseline: epochs over a shuffled list of all clips, so each
/// class appears in proportion to its clip count.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    perm: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(n_clips: usize, seed: u64) -> Result<Self> {
        if n_clips == 0 {
            return Err(invalid("uniform sampler over an empty dataset"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n_clips).collect();
        perm.shuffle(&mut rng);
        Ok(UniformSampler { perm, pos: 0, rng })
    }
}

impl Sampler for UniformSampler {
    fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size)
            .map(|_| {
                if self.pos == self.perm.len() {
                    self.perm.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.perm[self.pos - 1]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewed() -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); 3];
        let mut i = 0;
        for (c, n) in [1000, 100, 10].into_iter().enumerate() {
            for _ in 0..n {
                lists[c].push(i);
                i += 1;
            }
        }
        lists
    }

    fn class_of(i: usize) -> usize {
        match i {
            0..1000 => 0,
            1000..1100 => 1,
            _ => 2,
        }
    }

    #[test]
    fn batch_of_thirty_is_exactly_even() {
        let mut s = BalancedSampler::from_class_lists(skewed(), 7).unwrap();
        let mut counts = [0; 3];
        for i in s.next_batch(30) {
            counts[class_of(i)] += 1;
        }
        assert_eq!(counts, [10, 10, 10]);
    }

    #[test]
    fn each_cycle_visits_every_class() {
        let mut s = BalancedSampler::from_class_lists(skewed(), 3).unwrap();
        for _ in 0..50 {
            let mut seen: Vec<usize> = s.next_batch(3).into_iter().map(class_of).collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2]);
        }
    }

    #[test]
    fn small_class_reshuffles_on_wrap() {
        let mut s = BalancedSampler::from_class_lists(vec![vec![0, 1, 2, 3]], 1).unwrap();
        let a = s.next_batch(4);
        let b = s.next_batch(4);
        let mut sa = a.clone();
        sa.sort();
        assert_eq!(sa, vec![0, 1, 2, 3]);
        let mut sb = b.clone();
        sb.sort();
        assert_eq!(sb, vec![0, 1, 2, 3]);
    }

    #[test]
    fn empty_classes_error() {
        assert!(BalancedSampler::from_class_lists(vec![vec![], vec![]], 0).is_err());
        assert!(UniformSampler::new(0, 0).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = BalancedSampler::from_class_lists(skewed(), 11).unwrap();
        let mut b = BalancedSampler::from_class_lists(skewed(), 11).unwrap();
        assert_eq!(a.next_batch(100), b.next_batch(100));
        let mut a = UniformSampler::new(50, 2).unwrap();
        let mut b = UniformSampler::new(50, 2).unwrap();
        assert_eq!(a.next_batch(120), b.next_batch(120));
    }
}
