use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::level::{Lookup, SetAssocCache, Shadow};
use super::spec::HierarchySpec;
use crate::memory::{AccessKind, Address, MemEvent};

/// Deepest hierarchy the simulator handles.
pub const MAX_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissClass {
    Compulsory,
    Capacity,
    Conflict,
}

/// Result of one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    /// Level that hit (0-based), or `None` when the block came from memory.
    pub hit_level: Option<usize>,
    /// `Some(class)` for every level that missed.
    pub misses: [Option<MissClass>; MAX_LEVELS],
    pub cost: u64,
}

impl AccessOutcome {
    pub fn missed(&self, level: usize) -> bool {
        self.misses[level].is_some()
    }

    pub fn class(&self, level: usize) -> Option<MissClass> {
        self.misses[level]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    /// References that reached this level.
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub compulsory: u64,
    pub capacity: u64,
    pub conflict: u64,
    /// References that missed in the fully-associative shadow.
    pub fa_misses: u64,
    /// References that hit here but missed in the shadow.
    pub fa_only_misses: u64,
    /// Misses on a block already touched earlier in the same phase.
    pub phase_remisses: u64,
}

impl LevelStats {
    fn merge(&mut self, o: &LevelStats) {
        self.accesses += o.accesses;
        self.hits += o.hits;
        self.misses += o.misses;
        self.compulsory += o.compulsory;
        self.capacity += o.capacity;
        self.conflict += o.conflict;
        self.fa_misses += o.fa_misses;
        self.fa_only_misses += o.fa_only_misses;
        self.phase_remisses += o.phase_remisses;
    }
}

/// Aggregated counters. `cost = ops + work + latency`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub references: u64,
    /// Unit operations charged to memory references.
    pub ops: u64,
    /// Unit operations charged to register-only computation.
    pub work: u64,
    /// Sum of miss latencies.
    pub latency: u64,
    pub levels: Vec<LevelStats>,
}

impl RunStats {
    pub fn new(depth: usize) -> Self {
        RunStats {
            levels: vec![LevelStats::default(); depth],
            ..Default::default()
        }
    }

    pub fn cost(&self) -> u64 {
        self.ops + self.work + self.latency
    }

    pub fn misses(&self, level: usize) -> u64 {
        self.levels[level].misses
    }

    pub fn total_misses(&self) -> u64 {
        self.levels.iter().map(|l| l.misses).sum()
    }

    pub fn merge(&mut self, other: &RunStats) {
        self.references += other.references;
        self.ops += other.ops;
        self.work += other.work;
        self.latency += other.latency;
        if self.levels.len() < other.levels.len() {
            self.levels
                .resize(other.levels.len(), LevelStats::default());
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.merge(b);
        }
    }

    fn record(
        &mut self,
        out: &AccessOutcome,
        ops: u64,
        reached: usize,
        fa: &[bool; MAX_LEVELS],
        remiss: &[bool; MAX_LEVELS],
    ) {
        self.references += 1;
        self.ops += ops;
        self.latency += out.cost - ops;
        for (i, lv) in self.levels.iter_mut().enumerate().take(reached) {
            lv.accesses += 1;
            if !fa[i] {
                lv.fa_misses += 1;
            }
            match out.misses[i] {
                Some(class) => {
                    lv.misses += 1;
                    match class {
                        MissClass::Compulsory => lv.compulsory += 1,
                        MissClass::Capacity => lv.capacity += 1,
                        MissClass::Conflict => lv.conflict += 1,
                    }
                    if remiss[i] {
                        lv.phase_remisses += 1;
                    }
                }
                None => {
                    lv.hits += 1;
                    if !fa[i] {
                        lv.fa_only_misses += 1;
                    }
                }
            }
        }
    }
}

/// Identifies a watched address range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WatchId(usize);

#[derive(Debug, Clone)]
struct Watch {
    lo: u64,
    hi: u64,
    stats: RunStats,
}

#[derive(Debug, Clone)]
struct Level {
    cache: SetAssocCache,
    shadow: Shadow,
    touched: FxHashMap<u64, u64>,
}

/// Inclusive multi-level cache with LRU replacement and back-invalidation.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    spec: HierarchySpec,
    levels: Vec<Level>,
    stats: RunStats,
    watches: Vec<Watch>,
    phase: Option<u64>,
    phase_counter: u64,
    phase_stats: RunStats,
}

impl Hierarchy {
    pub fn new(spec: HierarchySpec) -> Self {
        assert!(spec.depth() <= MAX_LEVELS, "at most {MAX_LEVELS} levels");
        let levels = spec
            .levels()
            .iter()
            .map(|l| Level {
                cache: SetAssocCache::new(l),
                shadow: Shadow::new(l.line_count() as usize),
                touched: FxHashMap::default(),
            })
            .collect();
        let depth = spec.depth();
        Hierarchy {
            spec,
            levels,
            stats: RunStats::new(depth),
            watches: Vec::new(),
            phase: None,
            phase_counter: 0,
            phase_stats: RunStats::new(depth),
        }
    }

    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Charges register-only work to the running cost.
    pub fn add_work(&mut self, units: u64) {
        self.stats.work += units;
        if self.phase.is_some() {
            self.phase_stats.work += units;
        }
    }

    /// Starts collecting per-range statistics for `[lo, hi)`.
    pub fn watch(&mut self, lo: Address, hi: Address) -> WatchId {
        self.watches.push(Watch {
            lo: lo.0,
            hi: hi.0,
            stats: RunStats::new(self.depth()),
        });
        WatchId(self.watches.len() - 1)
    }

    pub fn watch_stats(&self, id: WatchId) -> &RunStats {
        &self.watches[id.0].stats
    }

    /// Opens a phase; misses on blocks touched earlier in the same phase are
    /// counted as `phase_remisses`.
    pub fn begin_phase(&mut self) {
        self.phase_counter += 1;
        self.phase = Some(self.phase_counter);
    }

    pub fn end_phase(&mut self) {
        self.phase = None;
    }

    /// Statistics of references made while a phase was open.
    pub fn phase_stats(&self) -> &RunStats {
        &self.phase_stats
    }

    pub fn is_resident(&self, addr: Address, level: usize) -> bool {
        let b = self.spec.level(level).block;
        self.levels[level].cache.contains(addr.0 / b)
    }

    /// Residency test by block number at `level`'s granularity.
    pub fn assert_resident(&self, block: u64, level: usize) -> bool {
        self.levels[level].cache.contains(block)
    }

    pub fn apply(&mut self, ev: MemEvent) -> AccessOutcome {
        self.access(ev.addr, ev.kind, 1)
    }

    /// Performs one reference charged `ops` unit operations (0 or 1).
    ///
    /// Writes are write-allocate and cost the same as reads.
    pub fn access(&mut self, addr: Address, _kind: AccessKind, ops: u64) -> AccessOutcome {
        let depth = self.levels.len();
        let a = addr.0;
        let mut blocks = [0u64; MAX_LEVELS];
        for (i, l) in self.spec.levels().iter().enumerate() {
            blocks[i] = a / l.block;
        }
        let hit_level = (0..depth).find(|&i| self.levels[i].cache.contains(blocks[i]));
        let reached = hit_level.map_or(depth, |h| h + 1);

        let mut misses = [None; MAX_LEVELS];
        let mut fa = [true; MAX_LEVELS];
        let mut remiss = [false; MAX_LEVELS];
        let mut cost = ops;

        for i in 0..reached {
            let view = self.levels[i].shadow.observe(blocks[i]);
            fa[i] = view.fa_hit;
            if Some(i) != hit_level {
                misses[i] = Some(if view.first_touch {
                    MissClass::Compulsory
                } else if view.fa_hit {
                    MissClass::Conflict
                } else {
                    MissClass::Capacity
                });
                cost += self.spec.level(i).latency;
            }
        }
        if let Some(p) = self.phase {
            for (i, lv) in self.levels.iter_mut().enumerate() {
                let prev = lv.touched.insert(blocks[i], p);
                remiss[i] = misses[i].is_some() && prev == Some(p);
            }
        }

        if let Some(h) = hit_level {
            let r = self.levels[h].cache.access(blocks[h]);
            debug_assert_eq!(r, Lookup::Hit);
        }
        for i in (0..reached.min(depth)).rev() {
            if Some(i) == hit_level {
                continue;
            }
            if let Lookup::Miss {
                evicted: Some(victim),
            } = self.levels[i].cache.access(blocks[i])
            {
                self.back_invalidate(i, victim);
            }
        }

        let out = AccessOutcome {
            hit_level,
            misses,
            cost,
        };
        self.stats.record(&out, ops, reached, &fa, &remiss);
        if self.phase.is_some() {
            self.phase_stats.record(&out, ops, reached, &fa, &remiss);
        }
        for w in &mut self.watches {
            if a >= w.lo && a < w.hi {
                w.stats.record(&out, ops, reached, &fa, &remiss);
            }
        }
        out
    }

    fn back_invalidate(&mut self, level: usize, victim: u64) {
        let big = self.spec.level(level).block;
        for j in 0..level {
            let small = self.spec.level(j).block;
            let ratio = big / small;
            for sub in victim * ratio..(victim + 1) * ratio {
                self.levels[j].cache.invalidate(sub);
            }
        }
    }

    /// Checks the inclusion property for every block resident at any level.
    pub fn inclusion_holds(&self, probe: impl IntoIterator<Item = Address>) -> bool {
        probe.into_iter().all(|addr| {
            (0..self.depth()).all(|i| {
                !self.is_resident(addr, i)
                    || (i + 1..self.depth()).all(|j| self.is_resident(addr, j))
            })
        })
    }
}

/// Replays `events` through a fresh hierarchy.
pub fn run_trace(spec: &HierarchySpec, events: impl IntoIterator<Item = MemEvent>) -> RunStats {
    let mut h = Hierarchy::new(spec.clone());
    for ev in events {
        h.apply(ev);
    }
    h.stats().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::spec::CacheLevelSpec;

    fn read(block: u64, b: u64) -> MemEvent {
        MemEvent {
            kind: AccessKind::Read,
            addr: Address(block * b),
        }
    }

    fn single(c: u64, b: u64, a: u64, l: u64) -> HierarchySpec {
        HierarchySpec::single(CacheLevelSpec::new(c, b, a, l).unwrap()).unwrap()
    }

    #[test]
    fn first_reference_is_compulsory() {
        let mut h = Hierarchy::new(single(8, 4, 1, 10));
        let o = h.apply(read(0, 4));
        assert_eq!(o.class(0), Some(MissClass::Compulsory));
        assert_eq!(o.cost, 11);
    }

    #[test]
    fn same_set_reuse_is_conflict() {
        // two sets, direct mapped; blocks 0 and 2 share set 0
        let mut h = Hierarchy::new(single(8, 4, 1, 10));
        h.apply(read(0, 4));
        h.apply(read(2, 4));
        let o = h.apply(read(0, 4));
        assert_eq!(o.class(0), Some(MissClass::Conflict));
    }

    #[test]
    fn fully_associative_overflow_is_capacity() {
        let mut h = Hierarchy::new(single(8, 4, 2, 10));
        for b in [0, 1, 2] {
            h.apply(read(b, 4));
        }
        let o = h.apply(read(0, 4));
        assert_eq!(o.class(0), Some(MissClass::Capacity));
    }

    #[test]
    fn trace_closed_forms() {
        let spec = single(64, 8, 1, 50);
        assert_eq!(run_trace(&spec, []), RunStats::new(1));
        let n = 100u64;
        let s = run_trace(&spec, (0..n).map(|_| read(3, 8)));
        assert_eq!((s.levels[0].compulsory, s.levels[0].hits), (1, n - 1));
        assert_eq!(s.cost(), n - 1 + 1 + 50);
        // streaming scan
        let n = 1000u64;
        let s = run_trace(
            &spec,
            (0..n).map(|a| MemEvent {
                kind: AccessKind::Read,
                addr: Address(a),
            }),
        );
        assert_eq!(s.misses(0), n.div_ceil(8));
        assert_eq!(s.cost(), n + 50 * n.div_ceil(8));
    }

    #[test]
    fn residency_and_inclusion() {
        let l1 = CacheLevelSpec::direct_mapped(512, 8, 10).unwrap();
        let l2 = CacheLevelSpec::direct_mapped(16384, 32, 100).unwrap();
        let mut h = Hierarchy::new(HierarchySpec::new(vec![l1, l2]).unwrap());
        let o = h.access(Address(5), AccessKind::Read, 1);
        assert!(o.missed(0) && o.missed(1));
        assert_eq!(o.cost, 111);
        assert!(h.assert_resident(0, 0) && h.assert_resident(0, 1));
        // conflicting L1 block evicts from L1 only
        h.access(Address(512), AccessKind::Read, 1);
        assert!(!h.is_resident(Address(5), 0));
        assert!(h.is_resident(Address(5), 1));
        // L1 miss, L2 hit
        let o = h.access(Address(5), AccessKind::Write, 1);
        assert_eq!(o.hit_level, Some(1));
        assert_eq!(o.cost, 11);
        // L2 eviction back-invalidates L1
        h.access(Address(16384), AccessKind::Read, 1);
        assert!(!h.is_resident(Address(5), 0) && !h.is_resident(Address(5), 1));
        assert!(h.inclusion_holds((0..40000).step_by(8).map(Address)));
    }

    #[test]
    fn phase_remiss_counts_intra_phase_eviction() {
        let mut h = Hierarchy::new(single(8, 4, 1, 10));
        h.begin_phase();
        h.apply(read(0, 4));
        h.apply(read(2, 4));
        h.apply(read(0, 4));
        h.end_phase();
        assert_eq!(h.stats().levels[0].phase_remisses, 1);
        h.begin_phase();
        h.apply(read(2, 4));
        h.end_phase();
        assert_eq!(h.stats().levels[0].phase_remisses, 1);
        assert_eq!(h.phase_stats().references, 4);
    }

    #[test]
    fn watch_filters_by_range() {
        let mut h = Hierarchy::new(single(64, 8, 1, 5));
        let w = h.watch(Address(0), Address(16));
        for a in [0, 8, 16, 24, 0] {
            h.apply(read(a, 1));
        }
        assert_eq!(h.watch_stats(w).references, 3);
        assert_eq!(h.stats().references, 5);
    }
}
