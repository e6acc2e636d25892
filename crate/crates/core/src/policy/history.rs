//! Processing-time history with fast suffix queries.
//!
//! SERPT needs, for an elapsed time `p`, the count and sum of stored samples
//! that are `>= p`. Samples live in a sorted sequence of bounded blocks, each
//! carrying its own sum, so inserts, removals and suffix queries touch one
//! block plus a scan over block headers.

use std::collections::VecDeque;

use crate::model::Micros;

const BLOCK: usize = 256;

#[derive(Debug, Clone, Default)]
struct Block {
    items: Vec<Micros>,
    sum: u128,
}

/// Sorted multiset of durations.
#[derive(Debug, Clone, Default)]
pub struct SortedSamples {
    blocks: Vec<Block>,
    len: usize,
    sum: u128,
}

impl SortedSamples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sum(&self) -> u128 {
        self.sum
    }

    fn block_for(&self, x: Micros) -> usize {
        let i = self.blocks.partition_point(|b| *b.items.last().unwrap() < x);
        i.min(self.blocks.len().saturating_sub(1))
    }

    pub fn insert(&mut self, x: Micros) {
        self.len += 1;
        self.sum += x as u128;
        if self.blocks.is_empty() {
            self.blocks.push(Block {
                items: vec![x],
                sum: x as u128,
            });
            return;
        }
        let bi = self.block_for(x);
        let block = &mut self.blocks[bi];
        let pos = block.items.partition_point(|&v| v <= x);
        block.items.insert(pos, x);
        block.sum += x as u128;
        if block.items.len() >= 2 * BLOCK {
            let tail = block.items.split_off(BLOCK);
            let tail_sum: u128 = tail.iter().map(|&v| v as u128).sum();
            block.sum -= tail_sum;
            self.blocks.insert(
                bi + 1,
                Block {
                    items: tail,
                    sum: tail_sum,
                },
            );
        }
    }

    /// Removes one occurrence of `x`; returns whether it was present.
    pub fn remove(&mut self, x: Micros) -> bool {
        if self.blocks.is_empty() {
            return false;
        }
        let bi = self.block_for(x);
        let block = &mut self.blocks[bi];
        let Ok(pos) = block.items.binary_search(&x) else {
            return false;
        };
        block.items.remove(pos);
        block.sum -= x as u128;
        if block.items.is_empty() {
            self.blocks.remove(bi);
        }
        self.len -= 1;
        self.sum -= x as u128;
        true
    }

    /// Count and sum of samples `>= threshold`.
    pub fn at_least(&self, threshold: Micros) -> (u64, u128) {
        if threshold == 0 {
            return (self.len as u64, self.sum);
        }
        let (mut count, mut sum) = (0u64, 0u128);
        for block in self.blocks.iter().rev() {
            if block.items[0] >= threshold {
                count += block.items.len() as u64;
                sum += block.sum;
            } else {
                let idx = block.items.partition_point(|&v| v < threshold);
                count += (block.items.len() - idx) as u64;
                sum += block.items[idx..].iter().map(|&v| v as u128).sum::<u128>();
                break;
            }
        }
        (count, sum)
    }

    pub fn iter(&self) -> impl Iterator<Item = Micros> + '_ {
        self.blocks.iter().flat_map(|b| b.items.iter().copied())
    }
}

/// A function's past processing times, optionally bounded with
/// oldest-first eviction.
#[derive(Debug, Clone)]
pub struct History {
    samples: SortedSamples,
    order: VecDeque<Micros>,
    cap: Option<usize>,
}

impl History {
    pub fn unbounded() -> Self {
        Self {
            samples: SortedSamples::new(),
            order: VecDeque::new(),
            cap: None,
        }
    }

    pub fn bounded(cap: usize) -> Self {
        assert!(cap > 0);
        Self {
            samples: SortedSamples::new(),
            order: VecDeque::with_capacity(cap + 1),
            cap: Some(cap),
        }
    }

    /// Adds a sample and returns the evicted one, if any.
    pub fn push(&mut self, x: Micros) -> Option<Micros> {
        self.samples.insert(x);
        let cap = self.cap?;
        self.order.push_back(x);
        if self.order.len() > cap {
            let old = self.order.pop_front().unwrap();
            self.samples.remove(old);
            return Some(old);
        }
        None
    }

    pub fn samples(&self) -> &SortedSamples {
        &self.samples
    }

    /// Insertion-ordered contents; only tracked for bounded histories.
    pub fn recent(&self) -> impl Iterator<Item = Micros> + '_ {
        self.order.iter().copied()
    }
}
