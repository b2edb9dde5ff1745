//! Declarative cache hierarchy description and its YAML document format.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CacheError;

const HASWELL: &str = include_str!("../../presets/haswell.yaml");
const ZEN3: &str = include_str!("../../presets/zen3.yaml");

/// Names of the bundled hierarchy presets.
pub const PRESETS: [&str; 2] = ["haswell", "zen3"];

/// Replacement policy. Only LRU is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Replacement {
    #[default]
    Lru,
}

impl fmt::Display for Replacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LRU")
    }
}

impl Serialize for Replacement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("LRU")
    }
}

impl<'de> Deserialize<'de> for Replacement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        match name.as_str() {
            "LRU" => Ok(Replacement::Lru),
            other => Err(serde::de::Error::custom(format!(
                "unsupported replacement policy `{other}`, only LRU is simulated"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheLevelSpec {
    pub name: String,
    pub sets: u64,
    pub ways: u64,
    /// Line size in bytes.
    pub line: u64,
    pub replacement: Replacement,
    pub write_back: bool,
    /// Load-to-use latency in cycles.
    pub latency: u64,
    pub load_from: Option<String>,
    pub store_to: Option<String>,
    pub victim_to: Option<String>,
}

impl CacheLevelSpec {
    /// An LRU write-back level with no links.
    pub fn new(name: &str, sets: u64, ways: u64, line: u64, latency: u64) -> Self {
        CacheLevelSpec {
            name: name.to_string(),
            sets,
            ways,
            line,
            replacement: Replacement::Lru,
            write_back: true,
            latency,
            load_from: None,
            store_to: None,
            victim_to: None,
        }
    }

    /// Sets both `load_from` and `store_to` to `next`.
    pub fn backed_by(mut self, next: &str) -> Self {
        self.load_from = Some(next.to_string());
        self.store_to = Some(next.to_string());
        self
    }

    pub fn victims_to(mut self, next: &str) -> Self {
        self.victim_to = Some(next.to_string());
        self
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.sets * self.ways * self.line
    }

    fn links(&self) -> impl Iterator<Item = &str> {
        [&self.load_from, &self.store_to, &self.victim_to]
            .into_iter()
            .flatten()
            .map(String::as_str)
    }
}

/// A whole hierarchy: levels from the one closest to the core outward, plus
/// main memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HierarchySpec {
    pub levels: Vec<CacheLevelSpec>,
    pub memory_latency: u64,
    /// Level that receives every access.
    pub first: String,
    /// Level whose misses go to main memory.
    pub last: String,
}

impl HierarchySpec {
    /// Single hierarchy with `levels` chained through `load_from`/`store_to`
    /// in order. Links already present on a level are kept.
    pub fn chain(mut levels: Vec<CacheLevelSpec>, memory_latency: u64) -> Self {
        let names: Vec<String> = levels.iter().map(|l| l.name.clone()).collect();
        for (level, next) in levels.iter_mut().zip(names.iter().skip(1)) {
            level.load_from.get_or_insert_with(|| next.clone());
            level.store_to.get_or_insert_with(|| next.clone());
        }
        HierarchySpec {
            first: names.first().cloned().unwrap_or_default(),
            last: names.last().cloned().unwrap_or_default(),
            levels,
            memory_latency,
        }
    }

    pub fn preset(name: &str) -> Result<Self, CacheError> {
        match name {
            "haswell" => parse_cache_spec(HASWELL),
            "zen3" => parse_cache_spec(ZEN3),
            other => Err(CacheError::UnknownPreset(other.to_string())),
        }
    }

    /// Verbatim text of a bundled preset.
    pub fn preset_text(name: &str) -> Option<&'static str> {
        match name {
            "haswell" => Some(HASWELL),
            "zen3" => Some(ZEN3),
            _ => None,
        }
    }

    pub fn level(&self, name: &str) -> Option<&CacheLevelSpec> {
        self.levels.iter().find(|l| l.name == name)
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.name == name)
    }

    /// The level receiving all accesses.
    pub fn first_level(&self) -> &CacheLevelSpec {
        self.level(&self.first).expect("validated hierarchy")
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        let invalid = |msg: String| Err(CacheError::InvalidSpec(msg));
        if self.levels.is_empty() {
            return invalid("hierarchy has no cache levels".into());
        }
        if self.memory_latency == 0 {
            return invalid("memory latency must be at least 1".into());
        }
        let mut index = HashMap::new();
        for (i, level) in self.levels.iter().enumerate() {
            if index.insert(level.name.as_str(), i).is_some() {
                return invalid(format!("level {} declared twice", level.name));
            }
            if level.sets == 0 || level.ways == 0 {
                return invalid(format!("level {}: sets and ways must be at least 1", level.name));
            }
            if !level.line.is_power_of_two() {
                return invalid(format!(
                    "level {}: line size {} is not a power of two",
                    level.name, level.line
                ));
            }
            if level.latency == 0 {
                return invalid(format!("level {}: latency must be at least 1", level.name));
            }
        }
        for level in &self.levels {
            for target in level.links() {
                if !index.contains_key(target) {
                    return Err(CacheError::DanglingLink {
                        from: level.name.clone(),
                        to: target.to_string(),
                    });
                }
            }
        }
        for end in [&self.first, &self.last] {
            if !index.contains_key(end.as_str()) {
                return Err(CacheError::DanglingLink {
                    from: "memory".into(),
                    to: end.clone(),
                });
            }
        }
        self.topological_order()?;

        let last = &self.levels[index[self.last.as_str()]];
        if last.load_from.is_some() {
            return invalid(format!(
                "last level {} must load from memory, not {}",
                last.name,
                last.load_from.as_deref().unwrap_or_default()
            ));
        }
        // Acyclic, so this walk terminates.
        let mut cur = &self.levels[index[self.first.as_str()]];
        while let Some(next) = &cur.load_from {
            cur = &self.levels[index[next.as_str()]];
        }
        if cur.name != self.last {
            return invalid(format!(
                "load chain from {} ends at {}, not at the last level {}",
                self.first, cur.name, self.last
            ));
        }
        Ok(())
    }

    /// Level indices ordered so that every link points to a later level.
    /// Ties keep declaration order.
    pub fn topological_order(&self) -> Result<Vec<usize>, CacheError> {
        let n = self.levels.len();
        let pos = |name: &str| self.level_index(name);
        let mut indegree = vec![0usize; n];
        let mut edges = vec![Vec::new(); n];
        for (i, level) in self.levels.iter().enumerate() {
            let mut targets: Vec<usize> = level.links().filter_map(pos).collect();
            targets.sort_unstable();
            targets.dedup();
            for t in targets {
                edges[i].push(t);
                indegree[t] += 1;
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let Some(next) = (0..n).find(|&i| !done[i] && indegree[i] == 0) else {
                let stuck: Vec<&str> = (0..n)
                    .filter(|&i| !done[i])
                    .map(|i| self.levels[i].name.as_str())
                    .collect();
                return Err(CacheError::Cycle(stuck.join(", ")));
            };
            done[next] = true;
            order.push(next);
            for &t in &edges[next] {
                indegree[t] -= 1;
            }
        }
        Ok(order)
    }

    /// Renders the hierarchy in the same document format `parse_cache_spec`
    /// reads.
    pub fn render(&self) -> String {
        let doc = Document {
            caches: self
                .levels
                .iter()
                .map(|l| {
                    let entry = LevelEntry {
                        sets: l.sets,
                        ways: l.ways,
                        line: l.line,
                        replacement: l.replacement,
                        write_back: l.write_back,
                        store_to: l.store_to.clone(),
                        load_from: l.load_from.clone(),
                        victim_to: l.victim_to.clone(),
                        latency: l.latency,
                    };
                    (l.name.clone(), entry)
                })
                .collect(),
            memory: MemoryEntry {
                first: self.first.clone(),
                last: self.last.clone(),
                latency: self.memory_latency,
            },
        };
        serde_yaml::to_string(&doc).expect("hierarchy documents always serialize")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    caches: IndexMap<String, LevelEntry>,
    memory: MemoryEntry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelEntry {
    sets: u64,
    ways: u64,
    line: u64,
    replacement: Replacement,
    write_back: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    store_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    load_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    victim_to: Option<String>,
    latency: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemoryEntry {
    first: String,
    last: String,
    latency: u64,
}

/// Parses a hierarchy document:
///
/// ```yaml
/// caches:
///   L1: {sets: 64, ways: 8, line: 64, replacement: LRU, write_back: true,
///        store_to: L2, load_from: L2, latency: 4}
///   ...
/// memory: {first: L1, last: L3, latency: 200}
/// ```
///
/// Unknown and missing keys are rejected with their line and column.
pub fn parse_cache_spec(text: &str) -> Result<HierarchySpec, CacheError> {
    let doc: Document = serde_yaml::from_str(text).map_err(|e| CacheError::Parse(e.to_string()))?;
    let levels = doc
        .caches
        .into_iter()
        .map(|(name, e)| CacheLevelSpec {
            name,
            sets: e.sets,
            ways: e.ways,
            line: e.line,
            replacement: e.replacement,
            write_back: e.write_back,
            latency: e.latency,
            load_from: e.load_from,
            store_to: e.store_to,
            victim_to: e.victim_to,
        })
        .collect();
    let spec = HierarchySpec {
        levels,
        memory_latency: doc.memory.latency,
        first: doc.memory.first,
        last: doc.memory.last,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haswell_preset_values() {
        let h = HierarchySpec::preset("haswell").unwrap();
        let got: Vec<(&str, u64, u64, u64, u64)> = h
            .levels
            .iter()
            .map(|l| (l.name.as_str(), l.sets, l.ways, l.line, l.latency))
            .collect();
        assert_eq!(
            got,
            [("L1", 64, 8, 64, 4), ("L2", 512, 8, 64, 12), ("L3", 25600, 16, 64, 36)]
        );
        assert_eq!(h.memory_latency, 200);
        assert_eq!((h.first.as_str(), h.last.as_str()), ("L1", "L3"));
        assert_eq!(h.levels[1].victim_to.as_deref(), Some("L3"));
        assert_eq!(h.levels[0].victim_to, None);
        assert!(h.levels.iter().all(|l| l.write_back));
    }

    #[test]
    fn zen3_preset_values() {
        let z = HierarchySpec::preset("zen3").unwrap();
        assert_eq!(z.levels[0].latency, 7);
        assert_eq!(z.levels[1].sets, 1024);
        assert_eq!(z.levels[2].sets, 32768);
        assert_eq!(z.levels[2].latency, 46);
        assert_eq!(z.memory_latency, 200);
    }

    #[test]
    fn render_round_trip() {
        for name in PRESETS {
            let spec = HierarchySpec::preset(name).unwrap();
            assert_eq!(parse_cache_spec(&spec.render()).unwrap(), spec);
        }
    }

    #[test]
    fn rejects_fifo() {
        let text = HASWELL.replacen("replacement: LRU", "replacement: FIFO", 1);
        let err = parse_cache_spec(&text).unwrap_err().to_string();
        assert!(err.contains("unsupported replacement policy `FIFO`"), "{err}");
        assert!(err.contains("caches.L1") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_unknown_key() {
        let text = HASWELL.replacen("    ways: 8\n", "    ways: 8\n    prefetch: true\n", 1);
        let err = parse_cache_spec(&text).unwrap_err().to_string();
        assert!(err.contains("unknown field `prefetch`"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn rejects_missing_key() {
        let text = HASWELL.replacen("    latency: 4\n", "", 1);
        let err = parse_cache_spec(&text).unwrap_err().to_string();
        assert!(err.contains("missing field `latency`"), "{err}");
    }

    #[test]
    fn rejects_malformed_value() {
        let text = HASWELL.replacen("sets: 64", "sets: lots", 1);
        assert!(matches!(parse_cache_spec(&text), Err(CacheError::Parse(_))));
    }

    #[test]
    fn rejects_dangling_link() {
        let text = HASWELL.replacen("load_from: L3", "load_from: L4", 1);
        assert_eq!(
            parse_cache_spec(&text),
            Err(CacheError::DanglingLink {
                from: "L2".into(),
                to: "L4".into()
            })
        );
    }

    #[test]
    fn rejects_cycle() {
        let mut spec = HierarchySpec::chain(
            vec![
                CacheLevelSpec::new("L1", 1, 2, 64, 4),
                CacheLevelSpec::new("L2", 4, 2, 64, 10),
            ],
            100,
        );
        spec.levels[1].victim_to = Some("L1".into());
        assert!(matches!(spec.validate(), Err(CacheError::Cycle(_))));
    }

    #[test]
    fn single_level_is_valid() {
        let spec = HierarchySpec::chain(vec![CacheLevelSpec::new("L1", 1, 2, 64, 4)], 200);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.topological_order().unwrap(), vec![0]);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            HierarchySpec::preset("skylake"),
            Err(CacheError::UnknownPreset(_))
        ));
    }
}
