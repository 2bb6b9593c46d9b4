use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("{what} = {value} must be a power of two")]
    NotPowerOfTwo { what: &'static str, value: u64 },
    #[error("{what} must be positive")]
    Zero { what: &'static str },
    #[error("capacity {capacity} is not a multiple of associativity x block = {way_bytes}")]
    Indivisible { capacity: u64, way_bytes: u64 },
    #[error("hierarchy needs at least one level")]
    Empty,
    #[error("level {level}: {reason}")]
    Hierarchy { level: usize, reason: String },
}

/// Parameters of one cache level, all counted in words.
///
/// `latency` is the miss penalty in unit operations (the `L` / `l_i` of the model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheLevelSpec {
    pub capacity: u64,
    pub block: u64,
    pub assoc: u64,
    pub latency: u64,
}

impl CacheLevelSpec {
    pub fn new(capacity: u64, block: u64, assoc: u64, latency: u64) -> Result<Self, SpecError> {
        let spec = CacheLevelSpec {
            capacity,
            block,
            assoc,
            latency,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Direct-mapped cache of `capacity` words.
    pub fn direct_mapped(capacity: u64, block: u64, latency: u64) -> Result<Self, SpecError> {
        Self::new(capacity, block, 1, latency)
    }

    /// Fully-associative cache of `capacity` words.
    pub fn fully_associative(capacity: u64, block: u64, latency: u64) -> Result<Self, SpecError> {
        Self::new(capacity, block, capacity / block.max(1), latency)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for (what, value) in [
            ("capacity", self.capacity),
            ("block", self.block),
            ("assoc", self.assoc),
        ] {
            if value == 0 {
                return Err(SpecError::Zero { what });
            }
        }
        if !self.block.is_power_of_two() {
            return Err(SpecError::NotPowerOfTwo {
                what: "block",
                value: self.block,
            });
        }
        let way_bytes = self.assoc * self.block;
        if !self.capacity.is_multiple_of(way_bytes) {
            return Err(SpecError::Indivisible {
                capacity: self.capacity,
                way_bytes,
            });
        }
        let sets = self.capacity / way_bytes;
        if !sets.is_power_of_two() {
            return Err(SpecError::NotPowerOfTwo {
                what: "set count",
                value: sets,
            });
        }
        Ok(())
    }

    /// `s = C / (A·B)`
    pub fn set_count(&self) -> u64 {
        self.capacity / (self.assoc * self.block)
    }

    /// `L = C / B`, the number of lines.
    pub fn line_count(&self) -> u64 {
        self.capacity / self.block
    }

    pub fn map_block(&self, addr: u64) -> u64 {
        map_block(addr, self.block)
    }

    pub fn map_set(&self, block: u64) -> u64 {
        map_set(block, self.set_count())
    }
}

/// Block containing word `addr`.
pub fn map_block(addr: u64, block: u64) -> u64 {
    debug_assert!(block.is_power_of_two());
    addr / block
}

/// Cache set of `block` under modulo mapping.
pub fn map_set(block: u64, set_count: u64) -> u64 {
    block % set_count
}

/// Ordered levels, fastest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    levels: Vec<CacheLevelSpec>,
}

impl HierarchySpec {
    /// Builds a hierarchy. A single level only needs a valid level spec; two or
    /// more levels must also satisfy the multi-level structural assumptions:
    /// power-of-two line counts, `2·B_i ≤ B_{i+1}`, `L_i ≤ L_{i+1}`,
    /// `B_k ≤ L_1` and `4·B_k ≤ B_1·L_1`.
    pub fn new(levels: Vec<CacheLevelSpec>) -> Result<Self, SpecError> {
        if levels.is_empty() {
            return Err(SpecError::Empty);
        }
        for (i, l) in levels.iter().enumerate() {
            l.validate().map_err(|e| SpecError::Hierarchy {
                level: i + 1,
                reason: e.to_string(),
            })?;
        }
        if levels.len() > 1 {
            check_multilevel(&levels)?;
        }
        Ok(HierarchySpec { levels })
    }

    pub fn single(level: CacheLevelSpec) -> Result<Self, SpecError> {
        Self::new(vec![level])
    }

    pub fn levels(&self) -> &[CacheLevelSpec] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &CacheLevelSpec {
        &self.levels[i]
    }

    pub fn last(&self) -> &CacheLevelSpec {
        self.levels.last().expect("non-empty hierarchy")
    }

    /// `C_i = Σ_{j ≤ i} M_j` for `i` in 0-based indexing.
    pub fn cumulative_capacity(&self, i: usize) -> u64 {
        self.levels[..=i].iter().map(|l| l.capacity).sum()
    }
}

fn check_multilevel(levels: &[CacheLevelSpec]) -> Result<(), SpecError> {
    let fail = |level: usize, reason: String| Err(SpecError::Hierarchy { level, reason });
    for (i, l) in levels.iter().enumerate() {
        if !l.line_count().is_power_of_two() {
            return fail(
                i + 1,
                format!("line count {} is not a power of two", l.line_count()),
            );
        }
    }
    for (i, pair) in levels.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if 2 * a.block > b.block {
            return fail(
                i + 2,
                format!(
                    "2·B_{} = {} exceeds B_{} = {}",
                    i + 1,
                    2 * a.block,
                    i + 2,
                    b.block
                ),
            );
        }
        if a.line_count() > b.line_count() {
            return fail(
                i + 2,
                format!(
                    "line count {} is below the previous level's {}",
                    b.line_count(),
                    a.line_count()
                ),
            );
        }
    }
    let first = &levels[0];
    let bk = levels.last().unwrap().block;
    if bk > first.line_count() {
        return fail(
            1,
            format!("B_k = {bk} exceeds L_1 = {} lines", first.line_count()),
        );
    }
    if 4 * bk > first.block * first.line_count() {
        return fail(
            1,
            format!("4·B_k = {} exceeds B_1·L_1 = {}", 4 * bk, first.capacity),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_and_set_maps() {
        assert_eq!(map_block(13, 4), 3);
        assert_eq!(map_block(0, 8), 0);
        assert_eq!(map_block(4096, 32), 128);
        assert_eq!(map_set(7, 4), 3);
        assert_eq!(map_set(8, 4), 0);
        assert_eq!(map_set(5, 1), 0);
    }

    #[test]
    fn derived_counts() {
        let s = CacheLevelSpec::new(1024, 16, 2, 50).unwrap();
        assert_eq!(s.set_count(), 32);
        assert_eq!(s.line_count(), 64);
        let three_way = CacheLevelSpec::new(3 * 256 * 32, 32, 3, 10).unwrap();
        assert_eq!(three_way.set_count(), 256);
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(CacheLevelSpec::new(1024, 12, 1, 1).is_err());
        assert!(CacheLevelSpec::new(1000, 8, 1, 1).is_err());
        assert!(CacheLevelSpec::new(0, 8, 1, 1).is_err());
        assert!(CacheLevelSpec::new(3 * 64, 64, 1, 1).is_err());
    }

    #[test]
    fn multilevel_assumptions() {
        let l1 = CacheLevelSpec::direct_mapped(512, 8, 10).unwrap();
        let l2 = CacheLevelSpec::direct_mapped(16384, 32, 100).unwrap();
        let h = HierarchySpec::new(vec![l1, l2]).unwrap();
        assert_eq!(h.cumulative_capacity(1), 512 + 16384);
        // B_i·L_i ≥ B_k·B_i follows from the checks
        for l in h.levels() {
            assert!(l.line_count() * l.block >= h.last().block * l.block);
        }
        // 2·B_1 > B_2
        let bad = CacheLevelSpec::direct_mapped(16384, 8, 100).unwrap();
        assert!(HierarchySpec::new(vec![l1, bad]).is_err());
        // tall-cache violation: B_k > L_1
        let tiny = CacheLevelSpec::direct_mapped(64, 8, 1).unwrap();
        let l2b = CacheLevelSpec::direct_mapped(1 << 16, 32, 100).unwrap();
        assert!(HierarchySpec::new(vec![tiny, l2b]).is_err());
        // fewer lines at the slower level
        let small2 = CacheLevelSpec::direct_mapped(1024, 32, 100).unwrap();
        assert!(HierarchySpec::new(vec![l1, small2]).is_err());
    }
}
