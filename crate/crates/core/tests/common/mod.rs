//! Brute-force reference model shared by the integration tests.
//!
//! Every set is a plain `Vec` in LRU order (front = least recent), the
//! fully-associative shadow is one such `Vec`, and every lookup is a linear
//! scan. Slow, but simple enough to trust.

#![allow(dead_code)]

use std::collections::HashSet;

use cachelab::cache::HierarchySpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub compulsory: u64,
    pub capacity: u64,
    pub conflict: u64,
    pub fa_misses: u64,
    pub fa_only_misses: u64,
}

struct OracleLevel {
    block: u64,
    assoc: usize,
    latency: u64,
    sets: Vec<Vec<u64>>,
    fa: Vec<u64>,
    fa_cap: usize,
    seen: HashSet<u64>,
}

/// Moves `b` to the most-recent end; returns whether it was present and the
/// block evicted to make room, if any.
fn lru_touch(list: &mut Vec<u64>, b: u64, cap: usize) -> (bool, Option<u64>) {
    if let Some(i) = list.iter().position(|&x| x == b) {
        list.remove(i);
        list.push(b);
        return (true, None);
    }
    let victim = if list.len() == cap {
        Some(list.remove(0))
    } else {
        None
    };
    list.push(b);
    (false, victim)
}

pub struct Oracle {
    levels: Vec<OracleLevel>,
    pub counts: Vec<OracleCounts>,
    pub latency: u64,
    pub references: u64,
}

impl Oracle {
    pub fn new(spec: &HierarchySpec) -> Self {
        let levels = spec
            .levels()
            .iter()
            .map(|l| OracleLevel {
                block: l.block,
                assoc: l.assoc as usize,
                latency: l.latency,
                sets: vec![Vec::new(); (l.capacity / l.block / l.assoc) as usize],
                fa: Vec::new(),
                fa_cap: (l.capacity / l.block) as usize,
                seen: HashSet::new(),
            })
            .collect();
        Oracle {
            levels,
            counts: vec![OracleCounts::default(); spec.depth()],
            latency: 0,
            references: 0,
        }
    }

    fn resident(&self, i: usize, b: u64) -> bool {
        let l = &self.levels[i];
        l.sets[(b % l.sets.len() as u64) as usize].contains(&b)
    }

    pub fn access(&mut self, addr: u64) {
        self.references += 1;
        let depth = self.levels.len();
        let blocks: Vec<u64> = self.levels.iter().map(|l| addr / l.block).collect();
        let hit = (0..depth).find(|&i| self.resident(i, blocks[i]));
        let reached = hit.map_or(depth, |h| h + 1);
        for (i, &b) in blocks.iter().enumerate().take(reached) {
            let l = &mut self.levels[i];
            let c = &mut self.counts[i];
            let cap = l.fa_cap;
            let (fa_hit, _) = lru_touch(&mut l.fa, b, cap);
            let first = l.seen.insert(b);
            c.accesses += 1;
            if !fa_hit {
                c.fa_misses += 1;
            }
            if Some(i) == hit {
                c.hits += 1;
                if !fa_hit {
                    c.fa_only_misses += 1;
                }
            } else {
                c.misses += 1;
                self.latency += l.latency;
                if first {
                    c.compulsory += 1;
                } else if fa_hit {
                    c.conflict += 1;
                } else {
                    c.capacity += 1;
                }
            }
        }
        for i in (0..reached).rev() {
            let (assoc, nsets) = (self.levels[i].assoc, self.levels[i].sets.len() as u64);
            let b = blocks[i];
            let set = &mut self.levels[i].sets[(b % nsets) as usize];
            let (_, victim) = lru_touch(set, b, assoc);
            if let Some(v) = victim {
                let big = self.levels[i].block;
                for j in 0..i {
                    let small = self.levels[j].block;
                    let n = self.levels[j].sets.len() as u64;
                    for sub in v * (big / small)..(v + 1) * (big / small) {
                        self.levels[j].sets[(sub % n) as usize].retain(|&x| x != sub);
                    }
                }
            }
        }
    }
}

/// Random word addresses mixing a hot region, a strided sweep, scattered
/// references and bursts of same-set blocks, so every miss class occurs.
pub fn random_trace(n: usize, capacity: u64, block: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut stride_at = 0u64;
    while out.len() < n {
        match rng.gen_range(0..4) {
            0 => {
                for _ in 0..rng.gen_range(1..64) {
                    out.push(rng.gen_range(0..capacity / 2));
                }
            }
            1 => {
                for _ in 0..rng.gen_range(1..64) {
                    out.push(stride_at);
                    stride_at = (stride_at + block) % (8 * capacity);
                }
            }
            2 => {
                for _ in 0..rng.gen_range(1..32) {
                    out.push(rng.gen_range(0..16 * capacity));
                }
            }
            _ => {
                let base = rng.gen_range(0..capacity);
                for _ in 0..rng.gen_range(1..32) {
                    out.push(base + capacity * rng.gen_range(0..6));
                }
            }
        }
    }
    out.truncate(n);
    out
}
