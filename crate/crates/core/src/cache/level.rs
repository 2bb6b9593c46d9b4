//! Set-associative LRU storage for one level, plus the fully-associative
//! shadow used to classify misses.

use rustc_hash::{FxHashMap, FxHashSet};

use super::spec::CacheLevelSpec;

const EMPTY: u64 = u64::MAX;

/// Tags only; each set is kept in recency order, most recent first.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    assoc: usize,
    sets: u64,
    ways: Vec<u64>,
}

/// What happened to a block on access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    /// Missed; `evicted` is the displaced block, if the set was full.
    Miss {
        evicted: Option<u64>,
    },
}

impl SetAssocCache {
    pub fn new(spec: &CacheLevelSpec) -> Self {
        let sets = spec.set_count();
        let assoc = spec.assoc as usize;
        SetAssocCache {
            assoc,
            sets,
            ways: vec![EMPTY; sets as usize * assoc],
        }
    }

    fn set_slice(&mut self, block: u64) -> &mut [u64] {
        let s = (block % self.sets) as usize;
        &mut self.ways[s * self.assoc..(s + 1) * self.assoc]
    }

    /// Looks up `block`, installing it on a miss and updating recency either way.
    pub fn access(&mut self, block: u64) -> Lookup {
        let set = self.set_slice(block);
        if let Some(pos) = set.iter().position(|&t| t == block) {
            set[..=pos].rotate_right(1);
            return Lookup::Hit;
        }
        let victim = set[set.len() - 1];
        set.rotate_right(1);
        set[0] = block;
        Lookup::Miss {
            evicted: (victim != EMPTY).then_some(victim),
        }
    }

    pub fn contains(&self, block: u64) -> bool {
        let s = (block % self.sets) as usize;
        self.ways[s * self.assoc..(s + 1) * self.assoc].contains(&block)
    }

    /// Removes `block` if present (back-invalidation).
    pub fn invalidate(&mut self, block: u64) -> bool {
        let set = self.set_slice(block);
        if let Some(pos) = set.iter().position(|&t| t == block) {
            set[pos..].rotate_left(1);
            let last = set.len() - 1;
            set[last] = EMPTY;
            true
        } else {
            false
        }
    }

    /// Resident blocks of the set `block` maps to, most recent first.
    pub fn set_contents(&self, block: u64) -> Vec<u64> {
        let s = (block % self.sets) as usize;
        self.ways[s * self.assoc..(s + 1) * self.assoc]
            .iter()
            .copied()
            .filter(|&t| t != EMPTY)
            .collect()
    }
}

const NIL: u32 = u32::MAX;

/// Fully-associative LRU of fixed line count, O(1) per access.
#[derive(Debug, Clone)]
pub struct FaLru {
    capacity: usize,
    index: FxHashMap<u64, u32>,
    tag: Vec<u64>,
    prev: Vec<u32>,
    next: Vec<u32>,
    head: u32,
    tail: u32,
}

impl FaLru {
    pub fn new(capacity: usize) -> Self {
        FaLru {
            capacity,
            index: FxHashMap::default(),
            tag: Vec::with_capacity(capacity),
            prev: Vec::with_capacity(capacity),
            next: Vec::with_capacity(capacity),
            head: NIL,
            tail: NIL,
        }
    }

    fn unlink(&mut self, n: u32) {
        let (p, x) = (self.prev[n as usize], self.next[n as usize]);
        if p != NIL {
            self.next[p as usize] = x;
        } else {
            self.head = x;
        }
        if x != NIL {
            self.prev[x as usize] = p;
        } else {
            self.tail = p;
        }
    }

    fn push_front(&mut self, n: u32) {
        self.prev[n as usize] = NIL;
        self.next[n as usize] = self.head;
        if self.head != NIL {
            self.prev[self.head as usize] = n;
        }
        self.head = n;
        if self.tail == NIL {
            self.tail = n;
        }
    }

    /// Returns true on hit. Installs the block on a miss.
    pub fn access(&mut self, block: u64) -> bool {
        if let Some(&n) = self.index.get(&block) {
            if self.head != n {
                self.unlink(n);
                self.push_front(n);
            }
            return true;
        }
        let n = if self.tag.len() < self.capacity {
            self.tag.push(block);
            self.prev.push(NIL);
            self.next.push(NIL);
            (self.tag.len() - 1) as u32
        } else {
            let n = self.tail;
            self.unlink(n);
            self.index.remove(&self.tag[n as usize]);
            self.tag[n as usize] = block;
            n
        };
        self.index.insert(block, n);
        self.push_front(n);
        false
    }
}

/// Per-level three-way classifier: the set of blocks ever referenced plus an
/// equal-capacity fully-associative LRU fed with the same reference stream.
#[derive(Debug, Clone)]
pub struct Shadow {
    seen: FxHashSet<u64>,
    fa: FaLru,
}

/// Shadow verdict for one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShadowView {
    pub first_touch: bool,
    pub fa_hit: bool,
}

impl Shadow {
    pub fn new(lines: usize) -> Self {
        Shadow {
            seen: FxHashSet::default(),
            fa: FaLru::new(lines),
        }
    }

    pub fn observe(&mut self, block: u64) -> ShadowView {
        let first_touch = self.seen.insert(block);
        let fa_hit = self.fa.access(block);
        ShadowView {
            first_touch,
            fa_hit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_evicts_least_recent() {
        let spec = CacheLevelSpec::new(2 * 4, 4, 2, 1).unwrap(); // one set, two ways
        let mut c = SetAssocCache::new(&spec);
        assert_eq!(c.access(0), Lookup::Miss { evicted: None });
        assert_eq!(c.access(1), Lookup::Miss { evicted: None });
        assert_eq!(c.access(0), Lookup::Hit);
        assert_eq!(c.access(2), Lookup::Miss { evicted: Some(1) });
        assert!(c.contains(0) && c.contains(2) && !c.contains(1));
        assert!(c.invalidate(0));
        assert_eq!(c.set_contents(2), vec![2]);
    }

    #[test]
    fn fa_lru_matches_recency_list() {
        let mut fa = FaLru::new(3);
        let mut list: Vec<u64> = Vec::new();
        let trace = [1u64, 2, 3, 1, 4, 2, 5, 1, 1, 3, 4, 5, 2];
        for &b in &trace {
            let expect = list.contains(&b);
            list.retain(|&x| x != b);
            list.insert(0, b);
            list.truncate(3);
            assert_eq!(fa.access(b), expect, "block {b}");
        }
    }
}
