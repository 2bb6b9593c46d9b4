//! Binary min-heap of `(key, run)` pairs, either held in registers or stored
//! two words per entry in a simulated region.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::machine::Machine;
use crate::memory::{Region, Word};

pub(crate) enum Heap {
    Registers(BinaryHeap<Reverse<(Word, u64)>>),
    Memory { region: Region, len: u64 },
}

impl Heap {
    pub fn registers() -> Self {
        Heap::Registers(BinaryHeap::new())
    }

    pub fn memory(region: Region) -> Self {
        Heap::Memory { region, len: 0 }
    }

    #[cfg(test)]
    pub fn len(&self) -> u64 {
        match self {
            Heap::Registers(h) => h.len() as u64,
            Heap::Memory { len, .. } => *len,
        }
    }

    fn get(m: &mut Machine, r: &Region, i: u64) -> (Word, u64) {
        let a = r.base.0 + 2 * i;
        (m.load(a), m.load(a + 1))
    }

    fn put(m: &mut Machine, r: &Region, i: u64, e: (Word, u64)) {
        let a = r.base.0 + 2 * i;
        m.store(a, e.0);
        m.store(a + 1, e.1);
    }

    /// Inserts; register heaps charge `⌈log₂ len⌉` work.
    pub fn push(&mut self, m: &mut Machine, e: (Word, u64)) {
        match self {
            Heap::Registers(h) => {
                h.push(Reverse(e));
                m.work(super::ceil_log2(h.len() as u64).max(1));
            }
            Heap::Memory { region, len } => {
                assert!(2 * (*len + 1) <= region.length, "heap region overflow");
                let mut i = *len;
                *len += 1;
                while i > 0 {
                    let p = (i - 1) / 2;
                    let pe = Self::get(m, region, p);
                    if pe <= e {
                        break;
                    }
                    Self::put(m, region, i, pe);
                    i = p;
                }
                Self::put(m, region, i, e);
            }
        }
    }

    pub fn pop(&mut self, m: &mut Machine) -> Option<(Word, u64)> {
        match self {
            Heap::Registers(h) => {
                let r = h.pop().map(|Reverse(e)| e);
                if r.is_some() {
                    m.work(super::ceil_log2(h.len() as u64 + 1).max(1));
                }
                r
            }
            Heap::Memory { region, len } => {
                if *len == 0 {
                    return None;
                }
                let top = Self::get(m, region, 0);
                *len -= 1;
                if *len == 0 {
                    return Some(top);
                }
                let last = Self::get(m, region, *len);
                let mut i = 0;
                loop {
                    let l = 2 * i + 1;
                    if l >= *len {
                        break;
                    }
                    let mut c = l;
                    let mut ce = Self::get(m, region, l);
                    if l + 1 < *len {
                        let re = Self::get(m, region, l + 1);
                        if re < ce {
                            c = l + 1;
                            ce = re;
                        }
                    }
                    if last <= ce {
                        break;
                    }
                    Self::put(m, region, i, ce);
                    i = c;
                }
                Self::put(m, region, i, last);
                Some(top)
            }
        }
    }
}
