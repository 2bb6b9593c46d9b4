//! A simulated memory wired to a cache hierarchy. Every load and store goes
//! through the cache; the running cost is kept by the hierarchy.
//!
//! Charging: a load or store is one unit operation plus the latency of every
//! level it misses. A word move (`mv`) makes two references but is one unit
//! operation. A `touch` is a reference charged only its miss latency.

use crate::cache::{AccessOutcome, Hierarchy, HierarchySpec, RunStats, WatchId};
use crate::memory::{
    AccessKind, Address, LayoutMark, MemEvent, MemoryError, Region, SimMemory, Word,
    DEFAULT_SPACE_WORDS,
};

#[derive(Debug, Clone)]
pub struct Machine {
    mem: SimMemory,
    cache: Hierarchy,
    recorder: Option<Vec<MemEvent>>,
}

impl Machine {
    pub fn new(spec: HierarchySpec) -> Self {
        Self::with_space(spec, DEFAULT_SPACE_WORDS)
    }

    pub fn with_space(spec: HierarchySpec, space: u64) -> Self {
        Machine {
            mem: SimMemory::new(space),
            cache: Hierarchy::new(spec),
            recorder: None,
        }
    }

    /// Keeps a copy of every reference from now on.
    pub fn record_events(&mut self) {
        self.recorder = Some(Vec::new());
    }

    pub fn take_events(&mut self) -> Vec<MemEvent> {
        self.recorder.take().unwrap_or_default()
    }

    pub fn memory(&self) -> &SimMemory {
        &self.mem
    }

    pub fn memory_mut(&mut self) -> &mut SimMemory {
        &mut self.mem
    }

    pub fn cache(&self) -> &Hierarchy {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Hierarchy {
        &mut self.cache
    }

    pub fn spec(&self) -> &HierarchySpec {
        self.cache.spec()
    }

    pub fn stats(&self) -> &RunStats {
        self.cache.stats()
    }

    pub fn cost(&self) -> u64 {
        self.cache.stats().cost()
    }

    pub fn alloc(
        &mut self,
        name: &str,
        length: u64,
        alignment: u64,
    ) -> Result<Region, MemoryError> {
        self.mem.allocate(name, length, alignment, None)
    }

    pub fn alloc_at(&mut self, name: &str, length: u64, base: u64) -> Result<Region, MemoryError> {
        self.mem.allocate(name, length, 1, Some(Address(base)))
    }

    pub fn mark(&self) -> LayoutMark {
        self.mem.mark()
    }

    pub fn release(&mut self, mark: LayoutMark) {
        self.mem.release(mark);
    }

    pub fn watch(&mut self, region: &Region) -> WatchId {
        self.cache.watch(region.base, Address(region.end()))
    }

    pub fn watch_range(&mut self, lo: u64, hi: u64) -> WatchId {
        self.cache.watch(Address(lo), Address(hi))
    }

    pub fn work(&mut self, units: u64) {
        self.cache.add_work(units);
    }

    fn reference(&mut self, addr: u64, kind: AccessKind, ops: u64) -> AccessOutcome {
        let addr = Address(addr);
        if let Some(r) = &mut self.recorder {
            r.push(MemEvent { kind, addr });
        }
        self.cache.access(addr, kind, ops)
    }

    /// Bounds-checked read of `region[offset]`.
    pub fn read(&mut self, region: &Region, offset: u64) -> Result<Word, MemoryError> {
        let a = region.addr(offset)?;
        Ok(self.load(a.0))
    }

    /// Bounds-checked write of `region[offset]`.
    pub fn write(&mut self, region: &Region, offset: u64, value: Word) -> Result<(), MemoryError> {
        let a = region.addr(offset)?;
        self.store(a.0, value);
        Ok(())
    }

    /// Raw load by absolute address.
    pub fn load(&mut self, addr: u64) -> Word {
        self.reference(addr, AccessKind::Read, 1);
        self.mem.peek(Address(addr))
    }

    pub fn store(&mut self, addr: u64, value: Word) {
        self.reference(addr, AccessKind::Write, 1);
        self.mem.poke(Address(addr), value);
    }

    /// Copies one word; two references, one unit operation.
    pub fn mv(&mut self, src: u64, dst: u64) {
        self.reference(src, AccessKind::Read, 1);
        let v = self.mem.peek(Address(src));
        self.reference(dst, AccessKind::Write, 0);
        self.mem.poke(Address(dst), v);
    }

    /// Exchanges two words through a register: three unit operations.
    pub fn swap(&mut self, a: u64, b: u64) {
        let x = self.load(a);
        self.mv(b, a);
        self.store(b, x);
    }

    /// References `addr` without charging a unit operation; returns the outcome.
    pub fn touch(&mut self, addr: u64) -> AccessOutcome {
        self.reference(addr, AccessKind::Read, 0)
    }

    pub fn peek(&self, addr: u64) -> Word {
        self.mem.peek(Address(addr))
    }

    pub fn poke(&mut self, addr: u64, value: Word) {
        self.mem.poke(Address(addr), value);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{run_trace, CacheLevelSpec};

    fn dm(c: u64, b: u64, l: u64) -> HierarchySpec {
        HierarchySpec::single(CacheLevelSpec::direct_mapped(c, b, l).unwrap()).unwrap()
    }

    #[test]
    fn replay_reproduces_stats() {
        let spec = dm(256, 8, 20);
        let mut m = Machine::new(spec.clone());
        m.record_events();
        let r = m.alloc("r", 1000, 1).unwrap();
        for i in 0..1000 {
            m.write(&r, (i * 37) % 1000, i).unwrap();
        }
        for i in 0..1000 {
            m.read(&r, (i * 91) % 1000).unwrap();
        }
        let events = m.take_events();
        assert_eq!(events.len(), 2000);
        assert_eq!(&run_trace(&spec, events), m.stats());
    }

    #[test]
    fn move_is_one_op() {
        let mut m = Machine::new(dm(64, 8, 10));
        m.poke(0, 7);
        m.mv(0, 8);
        assert_eq!(m.peek(8), 7);
        assert_eq!(m.stats().ops, 1);
        assert_eq!(m.cost(), 1 + 20);
        m.touch(0);
        assert_eq!(m.cost(), 21);
    }
}
