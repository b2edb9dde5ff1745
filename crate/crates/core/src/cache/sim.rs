use super::{AccessKind, CacheError, HierarchySpec};

const EMPTY: u64 = u64::MAX;

/// Where a demand access was satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServedBy {
    /// Index of the level (in `HierarchySpec::levels` order) that hit.
    Level(usize),
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Level(usize),
    Memory,
}

/// Counters of one cache level.
///
/// `hits` and `misses` count demand accesses only. Lines arriving through
/// victim installs or write-backs are tallied separately.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LevelStats {
    pub name: String,
    pub hits: u64,
    pub misses: u64,
    /// Valid lines displaced to make room.
    pub evictions: u64,
    /// Lines received as victims of an inner level.
    pub victims_in: u64,
    /// Lines received as write-backs (or write-through stores) from an inner level.
    pub writebacks_in: u64,
    /// Lines this level wrote toward its `store_to` target.
    pub writebacks_out: u64,
}

impl LevelStats {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SimStats {
    /// Per-level counters, in `HierarchySpec::levels` order.
    pub levels: Vec<LevelStats>,
    /// Demand line fetches served by main memory.
    pub memory_reads: u64,
    /// Lines written back into main memory.
    pub memory_writes: u64,
    pub loads: u64,
    pub stores: u64,
}

impl SimStats {
    pub fn accesses(&self) -> u64 {
        self.loads + self.stores
    }

    pub fn level(&self, name: &str) -> Option<&LevelStats> {
        self.levels.iter().find(|l| l.name == name)
    }
}

#[derive(Debug, Clone)]
struct Level {
    sets: u64,
    ways: usize,
    line_shift: u32,
    write_back: bool,
    load_from: Target,
    store_to: Target,
    victim_to: Option<usize>,
    /// `sets * ways` slots holding the full line number, or `EMPTY`.
    lines: Vec<u64>,
    dirty: Vec<bool>,
    /// Last-use time per slot; smallest is least recently used.
    stamps: Vec<u64>,
    clock: u64,
    stats: LevelStats,
}

impl Level {
    #[inline]
    fn set_range(&self, line: u64) -> std::ops::Range<usize> {
        let start = (line % self.sets) as usize * self.ways;
        start..start + self.ways
    }

    #[inline]
    fn find(&self, line: u64) -> Option<usize> {
        let range = self.set_range(line);
        let base = range.start;
        self.lines[range].iter().position(|&l| l == line).map(|w| base + w)
    }

    #[inline]
    fn touch(&mut self, slot: usize) {
        self.clock += 1;
        self.stamps[slot] = self.clock;
    }

    /// Empty slot of the set if any, else its least recently used slot.
    fn victim_slot(&self, line: u64) -> usize {
        let range = self.set_range(line);
        let base = range.start;
        let set = &self.lines[range.clone()];
        if let Some(w) = set.iter().position(|&l| l == EMPTY) {
            return base + w;
        }
        let stamps = &self.stamps[range];
        let (w, _) = stamps.iter().enumerate().min_by_key(|&(_, s)| *s).expect("ways >= 1");
        base + w
    }
}

/// Mutable state of a simulated hierarchy.
///
/// Every level is write-back/write-allocate (or write-through when
/// `write_back` is false) with strict LRU replacement. A demand miss fetches
/// the line through `load_from` and installs it at every level on the way.
/// Displaced lines go to `victim_to` when set; otherwise dirty ones are
/// written through `store_to`.
#[derive(Debug, Clone)]
pub struct CacheState {
    levels: Vec<Level>,
    first: usize,
    flush_order: Vec<usize>,
    first_line: u64,
    memory_reads: u64,
    memory_writes: u64,
    loads: u64,
    stores: u64,
}

impl CacheState {
    /// Builds an empty hierarchy: all sets empty, all counters zero.
    pub fn new(spec: &HierarchySpec) -> Result<Self, CacheError> {
        spec.validate()?;
        let target = |name: &Option<String>| match name {
            Some(n) => Target::Level(spec.level_index(n).expect("validated link")),
            None => Target::Memory,
        };
        let levels = spec
            .levels
            .iter()
            .map(|l| {
                let slots = (l.sets * l.ways) as usize;
                Level {
                    sets: l.sets,
                    ways: l.ways as usize,
                    line_shift: l.line.trailing_zeros(),
                    write_back: l.write_back,
                    load_from: target(&l.load_from),
                    store_to: target(&l.store_to),
                    victim_to: l
                        .victim_to
                        .as_ref()
                        .map(|n| spec.level_index(n).expect("validated link")),
                    lines: vec![EMPTY; slots],
                    dirty: vec![false; slots],
                    stamps: vec![0; slots],
                    clock: 0,
                    stats: LevelStats {
                        name: l.name.clone(),
                        ..LevelStats::default()
                    },
                }
            })
            .collect();
        Ok(CacheState {
            levels,
            first: spec.level_index(&spec.first).expect("validated first"),
            flush_order: spec.topological_order()?,
            first_line: spec.first_level().line,
            memory_reads: 0,
            memory_writes: 0,
            loads: 0,
            stores: 0,
        })
    }

    /// Issues one demand access to the first level.
    pub fn access(&mut self, kind: AccessKind, address: u64, size: u64) -> Result<ServedBy, CacheError> {
        if size == 0 {
            return Err(CacheError::EmptyAccess);
        }
        if (address & (self.first_line - 1)) + size > self.first_line {
            return Err(CacheError::Straddle {
                address,
                size,
                line: self.first_line,
            });
        }
        let store = kind == AccessKind::Store;
        if store {
            self.stores += 1;
        } else {
            self.loads += 1;
        }
        Ok(self.demand(self.first, address, store))
    }

    pub fn load(&mut self, address: u64, size: u64) -> Result<ServedBy, CacheError> {
        self.access(AccessKind::Load, address, size)
    }

    pub fn store(&mut self, address: u64, size: u64) -> Result<ServedBy, CacheError> {
        self.access(AccessKind::Store, address, size)
    }

    fn demand(&mut self, idx: usize, address: u64, store: bool) -> ServedBy {
        let level = &mut self.levels[idx];
        let line = address >> level.line_shift;
        if let Some(slot) = level.find(line) {
            level.stats.hits += 1;
            level.touch(slot);
            if store {
                if level.write_back {
                    level.dirty[slot] = true;
                } else {
                    let to = level.store_to;
                    self.write_line(to, address);
                }
            }
            return ServedBy::Level(idx);
        }
        level.stats.misses += 1;
        let line_address = line << level.line_shift;
        let source = level.load_from;
        let served = match source {
            Target::Level(next) => self.demand(next, line_address, false),
            Target::Memory => {
                self.memory_reads += 1;
                ServedBy::Memory
            }
        };
        let write_back = self.levels[idx].write_back;
        self.install(idx, line, store && write_back);
        if store && !write_back {
            let to = self.levels[idx].store_to;
            self.write_line(to, address);
        }
        served
    }

    /// Places `line` into level `idx` as most recently used, displacing the
    /// LRU line of its set if the set is full.
    fn install(&mut self, idx: usize, line: u64, dirty: bool) {
        let level = &mut self.levels[idx];
        let slot = level.victim_slot(line);
        let old = level.lines[slot];
        let old_dirty = level.dirty[slot];
        level.lines[slot] = line;
        level.dirty[slot] = dirty;
        level.touch(slot);
        if old != EMPTY {
            level.stats.evictions += 1;
            let shift = level.line_shift;
            self.displace(idx, old << shift, old_dirty);
        }
    }

    fn displace(&mut self, idx: usize, address: u64, dirty: bool) {
        let level = &self.levels[idx];
        if let Some(victim_to) = level.victim_to {
            self.levels[victim_to].stats.victims_in += 1;
            self.place(victim_to, address, dirty);
        } else if dirty {
            let to = level.store_to;
            self.levels[idx].stats.writebacks_out += 1;
            self.write_line(to, address);
        }
    }

    /// Non-demand arrival of a line (victim or write-back): refresh it if
    /// present, otherwise install it. No hit or miss is counted.
    fn place(&mut self, idx: usize, address: u64, dirty: bool) {
        let level = &mut self.levels[idx];
        let line = address >> level.line_shift;
        match level.find(line) {
            Some(slot) => {
                level.dirty[slot] |= dirty;
                level.touch(slot);
            }
            None => self.install(idx, line, dirty),
        }
    }

    fn write_line(&mut self, target: Target, address: u64) {
        match target {
            Target::Memory => self.memory_writes += 1,
            Target::Level(idx) => {
                let level = &mut self.levels[idx];
                level.stats.writebacks_in += 1;
                if level.write_back {
                    self.place(idx, address, true);
                } else {
                    let line = address >> level.line_shift;
                    if let Some(slot) = level.find(line) {
                        level.touch(slot);
                    }
                    let to = level.store_to;
                    self.write_line(to, address);
                }
            }
        }
    }

    /// Writes every dirty line toward memory along its `store_to` chain,
    /// inner levels first, leaving all caches clean. Returns the final
    /// statistics.
    pub fn flush_writeback(&mut self) -> SimStats {
        for i in 0..self.flush_order.len() {
            let idx = self.flush_order[i];
            let shift = self.levels[idx].line_shift;
            let to = self.levels[idx].store_to;
            for slot in 0..self.levels[idx].lines.len() {
                if !self.levels[idx].dirty[slot] {
                    continue;
                }
                self.levels[idx].dirty[slot] = false;
                self.levels[idx].stats.writebacks_out += 1;
                let address = self.levels[idx].lines[slot] << shift;
                self.write_line(to, address);
            }
        }
        self.stats()
    }

    /// Snapshot of all counters.
    pub fn stats(&self) -> SimStats {
        SimStats {
            levels: self.levels.iter().map(|l| l.stats.clone()).collect(),
            memory_reads: self.memory_reads,
            memory_writes: self.memory_writes,
            loads: self.loads,
            stores: self.stores,
        }
    }

    /// Number of dirty lines currently held at each level.
    pub fn dirty_lines(&self) -> Vec<usize> {
        self.levels
            .iter()
            .map(|l| l.dirty.iter().filter(|&&d| d).count())
            .collect()
    }
}
