//! Fixed-capacity FIFO of past key embeddings.

use crate::error::{Error, Result};
use crate::sphere::UnitVector;

/// Default number of stored keys.
pub const DEFAULT_CAPACITY: usize = 16384;

/// Ring buffer of keys. Entries are stored by value and never modified once
/// written; the oldest entry is overwritten when the buffer is full.
#[derive(Clone, Debug)]
pub struct MemoryQueue {
    capacity: usize,
    dim: usize,
    storage: Vec<UnitVector>,
    cursor: usize,
}

impl MemoryQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::ConfigInvalid("queue capacity must be positive".into()));
        }
        Ok(MemoryQueue {
            capacity,
            dim,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn filled(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Index of the slot the next push writes to.
    pub fn write_cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, batch: &[UnitVector]) -> Result<()> {
        if batch.len() > self.capacity {
            return Err(Error::BatchTooLarge {
                batch: batch.len(),
                capacity: self.capacity,
            });
        }
        if let Some(bad) = batch.iter().find(|v| v.dim() != self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: bad.dim(),
            });
        }
        for v in batch {
            if self.storage.len() < self.capacity {
                self.storage.push(v.clone());
            } else {
                self.storage[self.cursor] = v.clone();
            }
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    /// The `k` most recently pushed keys, newest first.
    pub fn top_k_recent(&self, k: usize) -> Result<Vec<UnitVector>> {
        if k > self.filled() {
            return Err(Error::NotEnoughElements {
                requested: k,
                filled: self.filled(),
            });
        }
        Ok((1..=k)
            .map(|back| {
                let slot = (self.cursor + self.capacity - back) % self.capacity;
                self.storage[slot].clone()
            })
            .collect())
    }

    /// Every stored key, in storage-slot order.
    pub fn negatives(&self) -> &[UnitVector] {
        &self.storage
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(i: usize) -> UnitVector {
        UnitVector::from_angle(i as f64 * 0.1)
    }

    #[test]
    fn push_examples() {
        let mut q = MemoryQueue::new(4, 2).unwrap();
        q.push(&[pt(0), pt(1), pt(2)]).unwrap();
        assert_eq!(q.filled(), 3);
        q.push(&[pt(3), pt(4)]).unwrap();
        assert_eq!(q.filled(), 4);
        assert!(!q.negatives().contains(&pt(0)));
        assert_eq!(q.write_cursor(), 1);
        assert!(matches!(
            q.push(&[pt(0), pt(1), pt(2), pt(3), pt(4)]),
            Err(Error::BatchTooLarge { .. })
        ));
        assert!(matches!(
            q.push(&[UnitVector::axis(3, 0).unwrap()]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn top_k_recent_examples() {
        let mut q = MemoryQueue::new(4, 2).unwrap();
        q.push(&[pt(0), pt(1), pt(2)]).unwrap();
        assert_eq!(q.top_k_recent(2).unwrap(), vec![pt(2), pt(1)]);
        assert_eq!(q.top_k_recent(3).unwrap(), vec![pt(2), pt(1), pt(0)]);
        assert!(matches!(
            q.top_k_recent(4),
            Err(Error::NotEnoughElements { .. })
        ));
        q.push(&[pt(3), pt(4), pt(5)]).unwrap();
        assert_eq!(q.top_k_recent(4).unwrap(), vec![pt(5), pt(4), pt(3), pt(2)]);
    }

    #[test]
    fn negatives_examples() {
        let mut q = MemoryQueue::new(4, 2).unwrap();
        assert!(q.negatives().is_empty());
        q.push(&[pt(0), pt(1)]).unwrap();
        assert_eq!(q.negatives(), &[pt(0), pt(1)]);
        q.push(&[pt(2), pt(3), pt(4), pt(5)]).unwrap();
        let mut held = q.negatives().to_vec();
        held.sort_by(|a, b| a.as_slice()[1].partial_cmp(&b.as_slice()[1]).unwrap());
        assert_eq!(held, vec![pt(2), pt(3), pt(4), pt(5)]);
    }
}
