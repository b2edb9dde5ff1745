//! Cycle estimate and fitness of a layout under a pattern and hierarchy.
//!
//! The cycle count charges every demand hit at its level's latency and every
//! line fetched from main memory at the memory latency. Fitness is the
//! number of accesses per cycle, divided once more by the first-level
//! latency so that values from different hierarchies are comparable. A trace
//! that hits the first level every time therefore scores exactly
//! `1 / latency^2`; anything else scores lower.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::cache::{CacheError, CacheState, HierarchySpec, SimStats};
use crate::layout::Layout;
use crate::patterns::{generate_trace, PatternError, PatternSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitnessError {
    #[error("no accesses were issued, fitness is undefined")]
    NoAccesses,
    #[error("level {level} has {line}-byte lines, smaller than the {element}-byte elements")]
    LineTooSmall { level: String, line: u64, element: u64 },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessValue {
    /// Accesses per normalized cycle; higher is better.
    pub value: f64,
    pub cycles: u64,
    pub stats: SimStats,
}

/// Total cycles spent serving demand accesses.
pub fn cycles(stats: &SimStats, spec: &HierarchySpec) -> u64 {
    let cache: u64 = stats
        .levels
        .iter()
        .zip(&spec.levels)
        .map(|(s, l)| s.hits * l.latency)
        .sum();
    cache + stats.memory_reads * spec.memory_latency
}

pub fn fitness(stats: &SimStats, spec: &HierarchySpec) -> Result<FitnessValue, FitnessError> {
    let first = spec.level_index(&spec.first).expect("validated hierarchy");
    let first_stats = &stats.levels[first];
    let accesses = first_stats.hits + first_stats.misses;
    if accesses == 0 {
        return Err(FitnessError::NoAccesses);
    }
    let total = cycles(stats, spec);
    let latency = spec.levels[first].latency;
    Ok(FitnessValue {
        value: accesses as f64 / (latency as f64 * total as f64),
        cycles: total,
        stats: stats.clone(),
    })
}

/// Simulates the pattern's trace under `layout` and scores it. Uncached.
pub fn evaluate(layout: &Layout, pattern: &PatternSpec, spec: &HierarchySpec) -> Result<FitnessValue, FitnessError> {
    for level in &spec.levels {
        if level.line < pattern.element_size() {
            return Err(FitnessError::LineTooSmall {
                level: level.name.clone(),
                line: level.line,
                element: pattern.element_size(),
            });
        }
    }
    let mut state = CacheState::new(spec)?;
    let mut failure = None;
    generate_trace(pattern, layout, |event| {
        if failure.is_none() {
            if let Err(e) = state.access(event.kind, event.address, event.size) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let stats = state.flush_writeback();
    fitness(&stats, spec)
}

type MemoKey = (String, String, u64);

/// Memoizing evaluator bound to one pattern and one hierarchy. Safe to share
/// across threads.
#[derive(Debug)]
pub struct Evaluator {
    pattern: PatternSpec,
    hierarchy: HierarchySpec,
    hierarchy_id: u64,
    memo: Mutex<HashMap<MemoKey, FitnessValue>>,
    simulations: AtomicU64,
}

impl Evaluator {
    pub fn new(pattern: PatternSpec, hierarchy: HierarchySpec) -> Result<Self, FitnessError> {
        hierarchy.validate()?;
        let mut h = DefaultHasher::new();
        hierarchy.render().hash(&mut h);
        Ok(Evaluator {
            pattern,
            hierarchy,
            hierarchy_id: h.finish(),
            memo: Mutex::new(HashMap::new()),
            simulations: AtomicU64::new(0),
        })
    }

    pub fn pattern(&self) -> &PatternSpec {
        &self.pattern
    }

    pub fn hierarchy(&self) -> &HierarchySpec {
        &self.hierarchy
    }

    fn key(&self, layout: &Layout) -> MemoKey {
        (layout.to_string(), self.pattern.to_string(), self.hierarchy_id)
    }

    pub fn evaluate(&self, layout: &Layout) -> Result<FitnessValue, FitnessError> {
        let key = self.key(layout);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        self.simulations.fetch_add(1, Ordering::Relaxed);
        let value = evaluate(layout, &self.pattern, &self.hierarchy)?;
        // Concurrent misses on one key compute identical values.
        self.memo.lock().expect("memo lock").insert(key, value.clone());
        Ok(value)
    }

    /// Evaluates in parallel; results keep the input order.
    pub fn evaluate_all(&self, layouts: &[Layout]) -> Vec<Result<FitnessValue, FitnessError>> {
        layouts.par_iter().map(|l| self.evaluate(l)).collect()
    }

    /// Number of simulations actually run (memo misses).
    pub fn simulations(&self) -> u64 {
        self.simulations.load(Ordering::Relaxed)
    }
}
