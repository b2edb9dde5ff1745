//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use genmorton::cache::{CacheLevelSpec, HierarchySpec};
use genmorton::fitness::evaluate;
use genmorton::patterns::PatternSpec;
use genmorton::{Layout, Shape};

/// Row-major position: `sum_i x_i * prod_{j<i} N_j`, dimension 0 fastest.
pub fn row_major_index(bits: &[u32], coord: &[u64]) -> u64 {
    let mut stride = 1u64;
    let mut index = 0;
    for (&b, &x) in bits.iter().zip(coord) {
        index += x * stride;
        stride <<= b;
    }
    index
}

/// Interleaves coordinate bits one output bit at a time: output bit `p`
/// takes the next unused bit of dimension `ranks[p]`.
pub fn interleave(ranks: &[usize], coord: &[u64]) -> u64 {
    let mut next = vec![0u32; coord.len()];
    let mut index = 0;
    for (p, &d) in ranks.iter().enumerate() {
        index |= ((coord[d] >> next[d]) & 1) << p;
        next[d] += 1;
    }
    index
}

/// Every distinct arrangement of the rank multiset of `bits`, by recursion
/// over remaining multiplicities.
pub fn all_rank_sequences(bits: &[u32]) -> Vec<Vec<usize>> {
    fn go(left: &mut [u32], prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.iter().all(|&c| c == 0) {
            out.push(prefix.clone());
            return;
        }
        for d in 0..left.len() {
            if left[d] > 0 {
                left[d] -= 1;
                prefix.push(d);
                go(left, prefix, out);
                prefix.pop();
                left[d] += 1;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut bits.to_vec(), &mut Vec::new(), &mut out);
    out
}

/// Multinomial `(sum b)! / prod b!` by repeated exact division.
pub fn multinomial(bits: &[u32]) -> u128 {
    let mut result = 1u128;
    let mut n = 0u128;
    for &b in bits {
        for k in 1..=u128::from(b) {
            n += 1;
            result = result * n / k;
        }
    }
    result
}

/// Set-associative LRU cache kept as one most-recent-first list per set.
/// Reports hit or miss per access; stores behave like loads.
pub struct LruOracle {
    line: u64,
    ways: usize,
    sets: Vec<Vec<u64>>,
}

impl LruOracle {
    pub fn new(sets: u64, ways: u64, line: u64) -> Self {
        LruOracle {
            line,
            ways: ways as usize,
            sets: vec![Vec::new(); sets as usize],
        }
    }

    pub fn access(&mut self, address: u64) -> bool {
        let tag = address / self.line;
        let count = self.sets.len() as u64;
        let set = &mut self.sets[(tag % count) as usize];
        let hit = match set.iter().position(|&t| t == tag) {
            Some(i) => {
                set.remove(i);
                true
            }
            None => {
                if set.len() == self.ways {
                    set.pop();
                }
                false
            }
        };
        set.insert(0, tag);
        hit
    }
}

/// Single-level hierarchy used for small search problems.
pub fn tiny_hierarchy() -> HierarchySpec {
    HierarchySpec::chain(vec![CacheLevelSpec::new("L1", 1, 4, 32, 4)], 200)
}

/// Best fitness over every layout of the pattern's shape, with the layouts
/// attaining it.
pub fn exhaustive_optimum(pattern: &PatternSpec, hierarchy: &HierarchySpec) -> (f64, BTreeSet<Layout>) {
    let shape: Shape = pattern.shape();
    let mut best = f64::NEG_INFINITY;
    let mut argmax = BTreeSet::new();
    for ranks in all_rank_sequences(shape.bits()) {
        let layout = Layout::new(ranks, shape.clone()).unwrap();
        let value = evaluate(&layout, pattern, hierarchy).unwrap().value;
        if value > best {
            best = value;
            argmax.clear();
        }
        if value == best {
            argmax.insert(layout);
        }
    }
    (best, argmax)
}

/// Every shape with `ndim` dimensions of at least one bit and total bits in
/// `1..=max_bits`.
pub fn shapes(ndim: usize, max_bits: u32) -> Vec<Vec<u32>> {
    fn go(ndim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == ndim {
            out.push(prefix.clone());
            return;
        }
        for b in 1..=left {
            prefix.push(b);
            go(ndim, left - b, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(ndim, max_bits, &mut Vec::new(), &mut out);
    out
}
