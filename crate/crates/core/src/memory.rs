//! Word-addressable simulated memory with an explicit region allocator.
//!
//! One word holds one element, so block sizes and capacities elsewhere in the
//! crate are counted in elements. Every [`SimMemory::read`] / [`SimMemory::write`]
//! yields exactly one [`MemEvent`]; the cache side consumes those events.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A simulated machine word.
pub type Word = u64;

/// Default address-space size in words (2^26).
pub const DEFAULT_SPACE_WORDS: u64 = 1 << 26;

/// A word index into the simulated address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u64);

impl Address {
    pub fn offset(self, words: u64) -> Address {
        Address(self.0 + words)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

/// One memory reference, as seen by the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemEvent {
    pub kind: AccessKind,
    pub addr: Address,
}

/// A named, aligned interval `[base, base + length)` of the address space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub base: Address,
    pub length: u64,
    pub alignment: u64,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.base.0 + self.length
    }

    pub fn contains(&self, addr: Address) -> bool {
        addr.0 >= self.base.0 && addr.0 < self.end()
    }

    /// Absolute address of `offset`, bounds-checked.
    pub fn addr(&self, offset: u64) -> Result<Address, MemoryError> {
        if offset >= self.length {
            return Err(MemoryError::OutOfBounds {
                region: self.name.clone(),
                offset,
                length: self.length,
            });
        }
        Ok(Address(self.base.0 + offset))
    }

    fn overlaps(&self, base: u64, length: u64) -> bool {
        base < self.end() && self.base.0 < base + length
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemoryError {
    #[error("alignment {0} is not a power of two")]
    BadAlignment(u64),
    #[error("region length must be at least one word")]
    EmptyRegion,
    #[error("fixed base {base} is not aligned to {alignment}")]
    UnalignedBase { base: u64, alignment: u64 },
    #[error("requested interval [{base}, {end}) overlaps region `{other}`")]
    Overlap { base: u64, end: u64, other: String },
    #[error("out of space: {length} words do not fit in a {space}-word address space")]
    OutOfSpace { length: u64, space: u64 },
    #[error("offset {offset} out of bounds for region `{region}` of length {length}")]
    OutOfBounds {
        region: String,
        offset: u64,
        length: u64,
    },
    #[error("no base avoids the forbidden cache sets for a {length}-word region")]
    Infeasible { length: u64 },
    #[error("invalid set-avoidance request: {0}")]
    BadSetRequest(String),
}

/// The set of regions carved out of one address space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryLayout {
    regions: Vec<Region>,
    space_size: u64,
}

/// Marker returned by [`MemoryLayout::mark`] for stack-style release.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutMark(usize);

impl Default for MemoryLayout {
    fn default() -> Self {
        Self::new(DEFAULT_SPACE_WORDS)
    }
}

impl MemoryLayout {
    pub fn new(space_size: u64) -> Self {
        MemoryLayout {
            regions: Vec::new(),
            space_size,
        }
    }

    pub fn space_size(&self) -> u64 {
        self.space_size
    }

    /// Regions in allocation order.
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Highest address in use, plus one.
    pub fn high_water(&self) -> u64 {
        self.regions.iter().map(Region::end).max().unwrap_or(0)
    }

    pub fn mark(&self) -> LayoutMark {
        LayoutMark(self.regions.len())
    }

    /// Drops every region allocated after `mark`.
    pub fn release(&mut self, mark: LayoutMark) {
        self.regions.truncate(mark.0);
    }

    fn conflict_with(&self, base: u64, length: u64) -> Option<&Region> {
        self.regions.iter().find(|r| r.overlaps(base, length))
    }

    /// First-fit allocation from the origin, or placement at `fixed_base`.
    pub fn allocate(
        &mut self,
        name: impl Into<String>,
        length: u64,
        alignment: u64,
        fixed_base: Option<Address>,
    ) -> Result<Region, MemoryError> {
        if alignment == 0 || !alignment.is_power_of_two() {
            return Err(MemoryError::BadAlignment(alignment));
        }
        if length == 0 {
            return Err(MemoryError::EmptyRegion);
        }
        let base = match fixed_base {
            Some(Address(base)) => {
                if base % alignment != 0 {
                    return Err(MemoryError::UnalignedBase { base, alignment });
                }
                if base + length > self.space_size {
                    return Err(MemoryError::OutOfSpace {
                        length,
                        space: self.space_size,
                    });
                }
                if let Some(other) = self.conflict_with(base, length) {
                    return Err(MemoryError::Overlap {
                        base,
                        end: base + length,
                        other: other.name.clone(),
                    });
                }
                base
            }
            None => self.first_fit(length, alignment, |_| true)?,
        };
        Ok(self.record(name.into(), base, length, alignment))
    }

    /// Allocates a block-aligned region none of whose blocks map (modulo `set_count`)
    /// onto a set in `forbidden`.
    pub fn allocate_avoiding_sets(
        &mut self,
        name: impl Into<String>,
        length: u64,
        block: u64,
        set_count: u64,
        forbidden: &[u64],
    ) -> Result<Region, MemoryError> {
        if block == 0 || !block.is_power_of_two() {
            return Err(MemoryError::BadAlignment(block));
        }
        if length == 0 {
            return Err(MemoryError::EmptyRegion);
        }
        if set_count == 0 {
            return Err(MemoryError::BadSetRequest(
                "set count must be positive".into(),
            ));
        }
        let mut banned = vec![false; set_count as usize];
        for &f in forbidden {
            if f >= set_count {
                return Err(MemoryError::BadSetRequest(format!(
                    "forbidden set {f} outside 0..{set_count}"
                )));
            }
            banned[f as usize] = true;
        }
        let blocks = length.div_ceil(block);
        // Longest cyclic run of allowed sets bounds the feasible block count.
        let allowed = banned.iter().filter(|b| !**b).count() as u64;
        let longest = if allowed == set_count {
            u64::MAX
        } else {
            let mut best = 0u64;
            let mut run = 0u64;
            for i in 0..(2 * set_count) {
                if banned[(i % set_count) as usize] {
                    run = 0;
                } else {
                    run += 1;
                    best = best.max(run);
                }
            }
            best.min(allowed)
        };
        if blocks > longest {
            return Err(MemoryError::Infeasible { length });
        }
        let ok = |base: u64| {
            let first = base / block;
            (0..blocks).all(|j| !banned[((first + j) % set_count) as usize])
        };
        let base = self
            .first_fit(length, block, ok)
            .map_err(|_| MemoryError::Infeasible { length })?;
        Ok(self.record(name.into(), base, length, block))
    }

    fn record(&mut self, name: String, base: u64, length: u64, alignment: u64) -> Region {
        let region = Region {
            name,
            base: Address(base),
            length,
            alignment,
        };
        self.regions.push(region.clone());
        region
    }

    fn first_fit(
        &self,
        length: u64,
        alignment: u64,
        accept: impl Fn(u64) -> bool,
    ) -> Result<u64, MemoryError> {
        let mut spans: Vec<(u64, u64)> = self.regions.iter().map(|r| (r.base.0, r.end())).collect();
        spans.sort_unstable();
        let mut cursor = 0u64;
        let mut gaps = Vec::with_capacity(spans.len() + 1);
        for (start, end) in spans {
            if start > cursor {
                gaps.push((cursor, start));
            }
            cursor = cursor.max(end);
        }
        gaps.push((cursor, self.space_size));
        for (lo, hi) in gaps {
            let mut base = lo.next_multiple_of(alignment);
            while base + length <= hi {
                if accept(base) {
                    return Ok(base);
                }
                base += alignment;
            }
        }
        Err(MemoryError::OutOfSpace {
            length,
            space: self.space_size,
        })
    }
}

/// Backing store plus layout. Storage grows lazily to the high-water mark,
/// so a large nominal address space costs nothing until it is used.
#[derive(Debug, Clone, Default)]
pub struct SimMemory {
    layout: MemoryLayout,
    words: Vec<Word>,
}

impl SimMemory {
    pub fn new(space_size: u64) -> Self {
        SimMemory {
            layout: MemoryLayout::new(space_size),
            words: Vec::new(),
        }
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    pub fn allocate(
        &mut self,
        name: impl Into<String>,
        length: u64,
        alignment: u64,
        fixed_base: Option<Address>,
    ) -> Result<Region, MemoryError> {
        self.layout.allocate(name, length, alignment, fixed_base)
    }

    pub fn allocate_avoiding_sets(
        &mut self,
        name: impl Into<String>,
        length: u64,
        block: u64,
        set_count: u64,
        forbidden: &[u64],
    ) -> Result<Region, MemoryError> {
        self.layout
            .allocate_avoiding_sets(name, length, block, set_count, forbidden)
    }

    pub fn mark(&self) -> LayoutMark {
        self.layout.mark()
    }

    /// Releases regions allocated after `mark`. Their contents are zeroed so a
    /// later allocation again starts from fresh memory.
    pub fn release(&mut self, mark: LayoutMark) {
        for r in &self.layout.regions[mark.0..] {
            let lo = (r.base.0 as usize).min(self.words.len());
            let hi = (r.end() as usize).min(self.words.len());
            self.words[lo..hi].fill(0);
        }
        self.layout.release(mark);
    }

    pub fn read(&self, region: &Region, offset: u64) -> Result<(Word, MemEvent), MemoryError> {
        let addr = region.addr(offset)?;
        Ok((
            self.peek(addr),
            MemEvent {
                kind: AccessKind::Read,
                addr,
            },
        ))
    }

    pub fn write(
        &mut self,
        region: &Region,
        offset: u64,
        value: Word,
    ) -> Result<MemEvent, MemoryError> {
        let addr = region.addr(offset)?;
        self.poke(addr, value);
        Ok(MemEvent {
            kind: AccessKind::Write,
            addr,
        })
    }

    /// Reads without producing an event. Used for setup and result extraction.
    pub fn peek(&self, addr: Address) -> Word {
        self.words.get(addr.0 as usize).copied().unwrap_or(0)
    }

    /// Writes without producing an event.
    pub fn poke(&mut self, addr: Address, value: Word) {
        let i = addr.0 as usize;
        if i >= self.words.len() {
            if value == 0 {
                return;
            }
            self.words.resize(i + 1, 0);
        }
        self.words[i] = value;
    }

    pub fn load_region(&mut self, region: &Region, values: &[Word]) {
        for (i, &v) in values.iter().enumerate().take(region.length as usize) {
            self.poke(region.base.offset(i as u64), v);
        }
    }

    pub fn dump_region(&self, region: &Region) -> Vec<Word> {
        (0..region.length)
            .map(|i| self.peek(region.base.offset(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_fit_from_origin() {
        let mut l = MemoryLayout::default();
        let r = l.allocate("a", 16, 4, None).unwrap();
        assert_eq!((r.base.0, r.length), (0, 16));
        let r2 = l.allocate("b", 8, 8, None).unwrap();
        assert_eq!(r2.base.0, 16);
    }

    #[test]
    fn fixed_base_must_be_aligned_and_free() {
        let mut l = MemoryLayout::default();
        l.allocate("a", 16, 4, None).unwrap();
        assert!(matches!(
            l.allocate("b", 8, 8, Some(Address(12))),
            Err(MemoryError::UnalignedBase { .. })
        ));
        assert!(matches!(
            l.allocate("b", 8, 8, Some(Address(8))),
            Err(MemoryError::Overlap { .. })
        ));
        assert!(matches!(
            l.allocate("c", 4, 3, None),
            Err(MemoryError::BadAlignment(3))
        ));
        assert!(matches!(
            MemoryLayout::new(32).allocate("d", 64, 1, None),
            Err(MemoryError::OutOfSpace { .. })
        ));
    }

    #[test]
    fn first_fit_reuses_gaps() {
        let mut l = MemoryLayout::default();
        l.allocate("hi", 8, 8, Some(Address(64))).unwrap();
        let r = l.allocate("lo", 32, 1, None).unwrap();
        assert_eq!(r.base.0, 0);
        let r = l.allocate("next", 40, 1, None).unwrap();
        assert_eq!(r.base.0, 72);
    }

    #[test]
    fn set_avoidance_single_block() {
        let mut l = MemoryLayout::default();
        let r = l.allocate_avoiding_sets("y", 4, 4, 4, &[0]).unwrap();
        assert_ne!((r.base.0 / 4) % 4, 0);
    }

    #[test]
    fn set_avoidance_matches_exhaustive_scan() {
        // Oracle: scan every block-aligned base in one period and keep the feasible ones.
        let (b, s) = (4u64, 4u64);
        let forbidden = [1u64, 2];
        let feasible: Vec<u64> = (0..s)
            .map(|blk| blk * b)
            .filter(|base| (0..2).all(|j| !forbidden.contains(&((base / b + j) % s))))
            .collect();
        assert_eq!(feasible, vec![12]);
        let mut l = MemoryLayout::default();
        let r = l.allocate_avoiding_sets("y", 8, b, s, &forbidden).unwrap();
        assert_eq!(r.base.0, 12);
    }

    #[test]
    fn set_avoidance_infeasible() {
        let mut l = MemoryLayout::default();
        assert!(matches!(
            l.allocate_avoiding_sets("y", 4, 4, 1, &[0]),
            Err(MemoryError::Infeasible { .. })
        ));
        // sets 2, 3, 0 are cyclically contiguous
        let r = l.allocate_avoiding_sets("y", 12, 4, 4, &[1]).unwrap();
        assert_eq!((r.base.0 / 4) % 4, 2);
        assert!(matches!(
            l.allocate_avoiding_sets("z", 16, 4, 4, &[1]),
            Err(MemoryError::Infeasible { .. })
        ));
    }

    #[test]
    fn read_write_semantics() {
        let mut m = SimMemory::new(1024);
        let r = m.allocate("r", 8, 1, None).unwrap();
        let ev = m.write(&r, 3, 42).unwrap();
        assert_eq!(ev.addr, Address(3));
        assert_eq!(m.read(&r, 3).unwrap().0, 42);
        assert_eq!(m.read(&r, 0).unwrap().0, 0);
        assert!(matches!(
            m.read(&r, 8),
            Err(MemoryError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn release_zeroes_and_frees() {
        let mut m = SimMemory::new(1024);
        let mark = m.mark();
        let r = m.allocate("r", 8, 1, None).unwrap();
        m.write(&r, 1, 9).unwrap();
        m.release(mark);
        let r2 = m.allocate("r2", 8, 1, None).unwrap();
        assert_eq!(r2.base, r.base);
        assert_eq!(m.read(&r2, 1).unwrap().0, 0);
    }
}
