//! Generalized Morton layouts.
//!
//! A layout over an `n`-dimensional array with extents `2^b_0 x ... x 2^b_{n-1}`
//! is a rank sequence naming, from the least significant output bit upward,
//! which input dimension supplies that bit. Each input consumes its own bits
//! from least to most significant, so the relative significance of the bits of
//! any single coordinate is preserved. Row-major, column-major and the classic
//! Morton (Z-order) layout are all members of the family.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::bits;

/// Largest supported total bit count. Keeps linear indices and byte offsets
/// (index times element size) inside `u64`.
pub const MAX_TOTAL_BITS: u32 = 62;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("shape must have at least one dimension")]
    EmptyShape,
    #[error("dimension {dim} has {bits} bits; every dimension needs at least one")]
    ZeroBits { dim: usize, bits: u32 },
    #[error("shape has {total} bits in total, more than the supported {MAX_TOTAL_BITS}")]
    TooManyBits { total: u32 },
    #[error("layout has {found} ranks but the shape has {expected} bits")]
    LengthMismatch { expected: usize, found: usize },
    #[error("rank {rank} at position {position} is out of range for {ndim} dimensions")]
    RankOutOfRange { rank: usize, position: usize, ndim: usize },
    #[error("layout is not a multiset permutation of the shape: {}", describe_multiplicity(.0))]
    Multiplicity(Vec<MultiplicityMismatch>),
    #[error("coordinate {coord:?} is out of bounds for shape {shape}")]
    CoordinateOutOfBounds { coord: Vec<u64>, shape: Shape },
    #[error("linear index {index} is out of range for {total_bits} bits")]
    IndexOutOfRange { index: u64, total_bits: u32 },
    #[error("axis order {0:?} is not a permutation of the dimensions")]
    InvalidAxisOrder(Vec<usize>),
    #[error("dimension {dim} is out of range for {ndim} dimensions")]
    DimensionOutOfRange { dim: usize, ndim: usize },
    #[error("shape admits {count} layouts, more than the cap of {cap}")]
    CapExceeded { count: BigUint, cap: u64 },
    #[error("cannot parse layout {text:?}: {reason}")]
    Parse { text: String, reason: String },
}

/// One dimension whose occurrence count in a rank sequence is wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicityMismatch {
    pub dim: usize,
    pub expected: u32,
    pub found: u32,
}

fn describe_multiplicity(list: &[MultiplicityMismatch]) -> String {
    list.iter()
        .map(|m| match m.found {
            0 => format!("dimension {} unused (expected {})", m.dim, m.expected),
            f => format!("dimension {} used {} times (expected {})", m.dim, f, m.expected),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Per-dimension bit widths. Dimension `i` has extent `2^bits[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape {
    bits: Vec<u32>,
}

impl Shape {
    pub fn new(bits: Vec<u32>) -> Result<Self, LayoutError> {
        if bits.is_empty() {
            return Err(LayoutError::EmptyShape);
        }
        if let Some((dim, &b)) = bits.iter().enumerate().find(|(_, &b)| b == 0) {
            return Err(LayoutError::ZeroBits { dim, bits: b });
        }
        let total: u32 = bits.iter().sum();
        if total > MAX_TOTAL_BITS {
            return Err(LayoutError::TooManyBits { total });
        }
        Ok(Shape { bits })
    }

    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    pub fn ndim(&self) -> usize {
        self.bits.len()
    }

    pub fn total_bits(&self) -> u32 {
        self.bits.iter().sum()
    }

    pub fn extent(&self, dim: usize) -> u64 {
        1 << self.bits[dim]
    }

    pub fn num_elements(&self) -> u64 {
        1 << self.total_bits()
    }

    fn check_coord(&self, coord: &[u64]) -> Result<(), LayoutError> {
        let ok = coord.len() == self.ndim() && coord.iter().zip(&self.bits).all(|(&x, &b)| x >> b == 0);
        if ok {
            Ok(())
        } else {
            Err(LayoutError::CoordinateOutOfBounds {
                coord: coord.to_vec(),
                shape: self.clone(),
            })
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bits.iter().map(|b| b.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A validated rank sequence together with its shape and the per-dimension
/// deposit masks derived from it.
///
/// Ordering and equality follow the rank sequence first, so sorting layouts
/// of one shape sorts them lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Layout {
    ranks: Vec<usize>,
    shape: Shape,
    masks: Vec<u64>,
}

impl Layout {
    /// Checks that `ranks` is a permutation of the multiset
    /// `{0: b_0, ..., n-1: b_{n-1}}`.
    pub fn new(ranks: Vec<usize>, shape: Shape) -> Result<Self, LayoutError> {
        let expected = shape.total_bits() as usize;
        if ranks.len() != expected {
            return Err(LayoutError::LengthMismatch {
                expected,
                found: ranks.len(),
            });
        }
        let ndim = shape.ndim();
        let mut counts = vec![0u32; ndim];
        for (position, &rank) in ranks.iter().enumerate() {
            if rank >= ndim {
                return Err(LayoutError::RankOutOfRange { rank, position, ndim });
            }
            counts[rank] += 1;
        }
        let wrong: Vec<MultiplicityMismatch> = counts
            .iter()
            .zip(shape.bits())
            .enumerate()
            .filter(|(_, (found, expected))| found != expected)
            .map(|(dim, (&found, &expected))| MultiplicityMismatch { dim, expected, found })
            .collect();
        if !wrong.is_empty() {
            return Err(LayoutError::Multiplicity(wrong));
        }
        Ok(Self::from_valid(ranks, shape))
    }

    fn from_valid(ranks: Vec<usize>, shape: Shape) -> Self {
        let mut masks = vec![0u64; shape.ndim()];
        for (pos, &rank) in ranks.iter().enumerate() {
            masks[rank] |= 1 << pos;
        }
        Layout { ranks, shape, masks }
    }

    /// Parses the bracketed text form and checks it against `shape`.
    pub fn parse_for(text: &str, shape: &Shape) -> Result<Self, LayoutError> {
        Layout::new(parse_ranks(text)?, shape.clone())
    }

    /// Canonical (lexicographic) layout: runs of `b_d` copies of each
    /// dimension `d`, in `axis_order`, least significant first.
    /// `axis_order[0]` is the contiguous axis.
    pub fn canonical(shape: &Shape, axis_order: &[usize]) -> Result<Self, LayoutError> {
        let ndim = shape.ndim();
        let mut seen = vec![false; ndim];
        let is_perm = axis_order.len() == ndim
            && axis_order
                .iter()
                .all(|&a| a < ndim && !std::mem::replace(&mut seen[a], true));
        if !is_perm {
            return Err(LayoutError::InvalidAxisOrder(axis_order.to_vec()));
        }
        let ranks = axis_order
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d, shape.bits()[d] as usize))
            .collect();
        Ok(Self::from_valid(ranks, shape.clone()))
    }

    /// Canonical layout with dimension 0 contiguous (row-major in the
    /// mode-0-fiber sense).
    pub fn row_major(shape: &Shape) -> Self {
        let order: Vec<usize> = (0..shape.ndim()).collect();
        Self::canonical(shape, &order).expect("identity order")
    }

    /// Canonical layout with the last dimension contiguous.
    pub fn column_major(shape: &Shape) -> Self {
        let order: Vec<usize> = (0..shape.ndim()).rev().collect();
        Self::canonical(shape, &order).expect("reversed order")
    }

    /// Round-robin interleave. Dimensions whose bits run out are skipped.
    pub fn morton(shape: &Shape) -> Self {
        let mut left: Vec<u32> = shape.bits().to_vec();
        let mut ranks = Vec::with_capacity(shape.total_bits() as usize);
        while ranks.len() < ranks.capacity() {
            for (d, rem) in left.iter_mut().enumerate() {
                if *rem > 0 {
                    *rem -= 1;
                    ranks.push(d);
                }
            }
        }
        Self::from_valid(ranks, shape.clone())
    }

    /// Uniformly random layout: Fisher-Yates shuffle of the multiset.
    pub fn random<R: Rng + ?Sized>(shape: &Shape, rng: &mut R) -> Self {
        let mut ranks = Self::row_major(shape).ranks;
        ranks.shuffle(rng);
        Self::from_valid(ranks, shape.clone())
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Output bit positions fed by dimension `dim`.
    pub fn deposit_mask(&self, dim: usize) -> u64 {
        self.masks[dim]
    }

    /// Maps a coordinate to its position in memory (in elements).
    pub fn linear_index(&self, coord: &[u64]) -> Result<u64, LayoutError> {
        self.shape.check_coord(coord)?;
        Ok(self.linear_index_unchecked(coord))
    }

    /// [`Layout::linear_index`] without the bounds check. Out-of-range
    /// coordinate bits are silently dropped.
    #[inline]
    pub fn linear_index_unchecked(&self, coord: &[u64]) -> u64 {
        bits::interleave(coord, &self.masks)
    }

    /// Portable reference path for [`Layout::linear_index`]; never uses the
    /// hardware deposit instruction.
    pub fn linear_index_portable(&self, coord: &[u64]) -> Result<u64, LayoutError> {
        self.shape.check_coord(coord)?;
        Ok(coord
            .iter()
            .zip(&self.masks)
            .fold(0, |acc, (&x, &mask)| acc | bits::deposit_soft(x, mask)))
    }

    pub fn inverse_index(&self, index: u64) -> Result<Vec<u64>, LayoutError> {
        let mut coord = vec![0; self.masks.len()];
        self.inverse_index_into(index, &mut coord)?;
        Ok(coord)
    }

    /// [`Layout::inverse_index`] writing into `coord`, which must have one
    /// entry per dimension.
    #[inline]
    pub fn inverse_index_into(&self, index: u64, coord: &mut [u64]) -> Result<(), LayoutError> {
        let total_bits = self.ranks.len() as u32;
        if index >> total_bits != 0 {
            return Err(LayoutError::IndexOutOfRange { index, total_bits });
        }
        assert_eq!(coord.len(), self.masks.len(), "one coordinate per dimension");
        bits::deinterleave(index, &self.masks, coord);
        Ok(())
    }

    /// Length (in elements) of the contiguous runs of mode-`dim` fibers: two
    /// to the number of leading (least significant) ranks equal to `dim`.
    pub fn contiguity_block(&self, dim: usize) -> Result<u64, LayoutError> {
        let ndim = self.shape.ndim();
        if dim >= ndim {
            return Err(LayoutError::DimensionOutOfRange { dim, ndim });
        }
        let run = self.ranks.iter().take_while(|&&r| r == dim).count();
        Ok(1 << run)
    }

    /// Reverses `ranks[start..end]`.
    pub fn with_reversed(&self, start: usize, end: usize) -> Self {
        let mut ranks = self.ranks.clone();
        ranks[start..end].reverse();
        Self::from_valid(ranks, self.shape.clone())
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, r) in self.ranks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("]")
    }
}

fn parse_ranks(text: &str) -> Result<Vec<usize>, LayoutError> {
    let err = |reason: &str| LayoutError::Parse {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| err("expected ranks enclosed in square brackets"))?;
    if inner.trim().is_empty() {
        return Err(err("layout has no ranks"));
    }
    inner
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| err(&format!("invalid rank {:?}", tok.trim())))
        })
        .collect()
}

/// Parses a layout and infers its shape from the rank multiplicities.
impl FromStr for Layout {
    type Err = LayoutError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let ranks = parse_ranks(text)?;
        let ndim = ranks.iter().max().map_or(0, |m| m + 1);
        let mut bits = vec![0u32; ndim];
        for &r in &ranks {
            bits[r] += 1;
        }
        let shape = Shape::new(bits)?;
        Layout::new(ranks, shape)
    }
}

/// Number of distinct layouts of a shape: the multinomial coefficient
/// `(sum b_i)! / prod(b_i!)`, computed exactly.
pub fn count_layouts(shape: &Shape) -> BigUint {
    // Product of binomials C(placed + b, b), each step exact.
    let mut count = BigUint::from(1u32);
    let mut placed = 0u64;
    for &b in shape.bits() {
        for k in 1..=u64::from(b) {
            count *= placed + k;
            count /= k;
        }
        placed += u64::from(b);
    }
    count
}

/// Lexicographic stream of every layout of a shape.
#[derive(Debug, Clone)]
pub struct Layouts {
    shape: Shape,
    next: Option<Vec<usize>>,
}

impl Iterator for Layouts {
    type Item = Layout;

    fn next(&mut self) -> Option<Layout> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(Layout::from_valid(current, self.shape.clone()))
    }
}

/// Enumerates all layouts of `shape` in lexicographic order of their rank
/// sequences, refusing when there are more than `cap` of them.
pub fn enumerate_layouts(shape: &Shape, cap: u64) -> Result<Layouts, LayoutError> {
    let count = count_layouts(shape);
    if count > BigUint::from(cap) {
        return Err(LayoutError::CapExceeded { count, cap });
    }
    Ok(Layouts {
        next: Some(Layout::row_major(shape).ranks),
        shape: shape.clone(),
    })
}

/// Steps to the next lexicographic permutation; handles repeated elements.
fn next_permutation(seq: &mut [usize]) -> bool {
    let Some(pivot) = seq.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let succ = seq
        .iter()
        .rposition(|&x| x > seq[pivot])
        .expect("a larger element exists right of the pivot");
    seq.swap(pivot, succ);
    seq[pivot + 1..].reverse();
    true
}
