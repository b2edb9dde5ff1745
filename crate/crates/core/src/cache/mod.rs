//! Trace-driven simulation of multi-level set-associative LRU caches.

mod sim;
mod spec;

pub use sim::{CacheState, LevelStats, ServedBy, SimStats};
pub use spec::{parse_cache_spec, CacheLevelSpec, HierarchySpec, Replacement, PRESETS};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cannot parse cache specification: {0}")]
    Parse(String),
    #[error("invalid cache specification: {0}")]
    InvalidSpec(String),
    #[error("{from} links to undeclared level {to}")]
    DanglingLink { from: String, to: String },
    #[error("cache levels form a cycle: {0}")]
    Cycle(String),
    #[error("unknown cache preset {0:?} (available: haswell, zen3)")]
    UnknownPreset(String),
    #[error("access of {size} bytes at {address:#x} straddles a {line}-byte line")]
    Straddle { address: u64, size: u64, line: u64 },
    #[error("access size must be at least one byte")]
    EmptyAccess,
}
