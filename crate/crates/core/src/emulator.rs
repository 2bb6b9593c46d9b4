//! Runs an explicit-I/O program inside the cache model.
//!
//! Fast memory becomes a `Buf` array whose block `i` maps to cache set
//! `offset + i`; slow memory becomes a `Mem` array. A transfer is a block copy
//! between the two. When source and destination share a set in a
//! direct-mapped cache the copy goes through one of two intermediate blocks
//! `Y1`, `Y2`. After each copy, Buf blocks in the disturbed sets are touched
//! again so every Buf block is resident when computation starts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{HierarchySpec, SpecError};
use crate::io::{validate_transfer, Direction, FastMemory, IoError, IoProgram, Round};
use crate::machine::Machine;
use crate::memory::{MemoryError, Region, Word};

#[derive(Debug, Error)]
pub enum EmulationError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("round {round}: {detail}")]
    Violation { round: u64, detail: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmulationOptions {
    /// Copy through `B` free registers instead of an intermediate block.
    pub register_copy: bool,
    /// Cache set of Buf block 0.
    pub buf_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmulationLayout {
    pub buf: Region,
    pub y: [Region; 2],
    pub mem: Region,
    pub block: u64,
    pub sets: u64,
}

impl EmulationLayout {
    pub fn buf_block(&self, frame: u64) -> u64 {
        self.buf.base.0 / self.block + frame
    }

    pub fn mem_block(&self, slow: u64) -> u64 {
        self.mem.base.0 / self.block + slow
    }

    pub fn y_block(&self, i: usize) -> u64 {
        self.y[i].base.0 / self.block
    }

    pub fn set_of(&self, block: u64) -> u64 {
        block % self.sets
    }

    /// Blocks beyond the slow-memory image.
    pub fn extra_blocks(&self) -> u64 {
        (self.buf.length + self.y[0].length + self.y[1].length) / self.block
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmulationStats {
    pub rounds: u64,
    /// `T`
    pub transfers: u64,
    /// `I`: touches plus bookkeeping of the original program.
    pub processing: u64,
    pub safe_copies: u64,
    pub direct_copies: u64,
    /// Restoration references that missed.
    pub restoration_touches: u64,
    /// Largest cost of one copy including its restoration.
    pub max_copy_cost: u64,
    pub misses: u64,
    pub total_cost: u64,
    pub latency: u64,
    pub block: u64,
}

impl EmulationStats {
    /// `I + 4LT + 2BT`
    pub fn bound(&self) -> u64 {
        self.processing + 4 * self.latency * self.transfers + 2 * self.block * self.transfers
    }
}

/// Outcome of one standalone block copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyReport {
    pub cost: u64,
    pub misses: u64,
    pub via: Option<u64>,
}

fn copy_words(m: &mut Machine, src: u64, dst: u64, block: u64) {
    for w in 0..block {
        m.mv(src * block + w, dst * block + w);
    }
}

/// Copies block `src` to block `dst`, going through whichever of `ys` lies in
/// neither block's set when the two share a set of a direct-mapped cache.
pub fn safe_block_copy(
    m: &mut Machine,
    src: u64,
    dst: u64,
    ys: [u64; 2],
) -> Result<CopyReport, EmulationError> {
    if src == dst {
        return Err(EmulationError::Config(
            "source and destination coincide".into(),
        ));
    }
    let level = *m.spec().level(0);
    let (b, sets) = (level.block, level.set_count());
    let before = (m.cost(), m.stats().misses(0));
    let via = if level.assoc == 1 && src % sets == dst % sets {
        let s = src % sets;
        let y = ys.into_iter().find(|y| y % sets != s).ok_or_else(|| {
            EmulationError::Config("no intermediate block outside the shared set".into())
        })?;
        copy_words(m, src, y, b);
        copy_words(m, y, dst, b);
        Some(y)
    } else {
        copy_words(m, src, dst, b);
        None
    };
    Ok(CopyReport {
        cost: m.cost() - before.0,
        misses: m.stats().misses(0) - before.1,
        via,
    })
}

/// Word-by-word copy with no intermediate; thrashes when the blocks share a
/// direct-mapped set.
pub fn naive_block_copy(m: &mut Machine, src: u64, dst: u64) -> CopyReport {
    let b = m.spec().level(0).block;
    let before = (m.cost(), m.stats().misses(0));
    copy_words(m, src, dst, b);
    CopyReport {
        cost: m.cost() - before.0,
        misses: m.stats().misses(0) - before.1,
        via: None,
    }
}

struct BufView<'a> {
    m: &'a mut Machine,
    base: u64,
    size: u64,
    touches: u64,
    work: u64,
}

impl FastMemory for BufView<'_> {
    fn read(&mut self, offset: u64) -> Result<Word, IoError> {
        if offset >= self.size {
            return Err(IoError::FastOutOfRange {
                offset,
                size: self.size,
            });
        }
        self.touches += 1;
        Ok(self.m.load(self.base + offset))
    }

    fn write(&mut self, offset: u64, value: Word) -> Result<(), IoError> {
        if offset >= self.size {
            return Err(IoError::FastOutOfRange {
                offset,
                size: self.size,
            });
        }
        self.touches += 1;
        self.m.store(self.base + offset, value);
        Ok(())
    }

    fn work(&mut self, units: u64) {
        self.work += units;
        self.m.work(units);
    }
}

/// Places Buf, Y1, Y2 contiguously from set `offset`, then Mem.
fn build_layout(
    m: &mut Machine,
    frames: u64,
    slow_blocks: u64,
    offset: u64,
) -> Result<EmulationLayout, EmulationError> {
    let level = *m.spec().level(0);
    let (b, sets) = (level.block, level.set_count());
    let base = (offset % sets) * b;
    let buf = m.alloc_at("Buf", frames * b, base)?;
    let y0 = m.alloc_at("Y1", b, buf.end())?;
    let y1 = m.alloc_at("Y2", b, y0.end())?;
    // Mem sits at a set-aligned base independent of `offset`, so shifting
    // Buf changes which Mem blocks share a set with which frames.
    let span = sets * b;
    let mem_base = (frames + 2 + sets).div_ceil(sets) * span;
    let mem = m.alloc_at("Mem", slow_blocks.max(1) * b, mem_base)?;
    let layout = EmulationLayout {
        buf,
        y: [y0, y1],
        mem,
        block: b,
        sets,
    };
    if sets >= 2 && layout.set_of(layout.y_block(0)) == layout.set_of(layout.y_block(1)) {
        return Err(EmulationError::Config(
            "intermediate blocks share a set".into(),
        ));
    }
    Ok(layout)
}

struct Core {
    m: Machine,
    layout: EmulationLayout,
    frames: u64,
    opts: EmulationOptions,
    stats: EmulationStats,
}

impl Core {
    fn restore_sets(&mut self, sets: &[u64]) -> u64 {
        let mut missed = 0;
        let first = self.layout.buf_block(0);
        for f in 0..self.frames {
            let blk = first + f;
            if sets.contains(&self.layout.set_of(blk))
                && self.m.touch(blk * self.layout.block).missed(0)
            {
                missed += 1;
            }
        }
        missed
    }

    fn copy(&mut self, src: u64, dst: u64) -> Result<(), EmulationError> {
        let b = self.layout.block;
        let before = self.m.cost();
        let mut disturbed = vec![self.layout.set_of(src), self.layout.set_of(dst)];
        if self.opts.register_copy {
            let mut regs = Vec::with_capacity(b as usize);
            for w in 0..b {
                regs.push(self.m.load(src * b + w));
            }
            for (w, v) in regs.into_iter().enumerate() {
                self.m.store(dst * b + w as u64, v);
            }
            self.stats.direct_copies += 1;
        } else {
            let ys = [self.layout.y_block(0), self.layout.y_block(1)];
            let r = safe_block_copy(&mut self.m, src, dst, ys)?;
            match r.via {
                Some(y) => {
                    disturbed.push(self.layout.set_of(y));
                    self.stats.safe_copies += 1;
                }
                None => self.stats.direct_copies += 1,
            }
        }
        self.stats.restoration_touches += self.restore_sets(&disturbed);
        self.stats.max_copy_cost = self.stats.max_copy_cost.max(self.m.cost() - before);
        Ok(())
    }

    fn check_resident(&self, round: u64) -> Result<(), EmulationError> {
        let first = self.layout.buf_block(0);
        for f in 0..self.frames {
            if !self.m.cache().assert_resident(first + f, 0) {
                return Err(EmulationError::Violation {
                    round,
                    detail: format!("Buf block {f} not resident"),
                });
            }
        }
        Ok(())
    }
}

fn emulate_core(
    program: &mut dyn IoProgram,
    spec: &HierarchySpec,
    initial: &[Word],
    opts: EmulationOptions,
) -> Result<(Vec<Word>, EmulationStats), EmulationError> {
    if spec.depth() != 1 {
        return Err(EmulationError::Config(
            "emulation targets a single cache level".into(),
        ));
    }
    let params = program.params();
    let level = *spec.level(0);
    if level.block != params.block {
        return Err(EmulationError::Config(format!(
            "cache block {} differs from program block {}",
            level.block, params.block
        )));
    }
    let frames = params.frames();
    let slow_blocks = program.slow_blocks();
    let mut m = Machine::new(spec.clone());
    let layout = build_layout(&mut m, frames, slow_blocks, opts.buf_offset)?;
    m.memory_mut().load_region(&layout.mem, initial);
    let b = params.block;
    let mut core = Core {
        m,
        layout,
        frames,
        opts,
        stats: EmulationStats {
            latency: level.latency,
            block: b,
            ..Default::default()
        },
    };
    // Bring Buf into the cache before the first round; the program's fast
    // memory starts out as zeros, which Buf already holds.
    let first = core.layout.buf_block(0);
    for f in 0..frames {
        core.m.touch((first + f) * b);
    }
    let warm = core.m.cost();
    let warm_misses = core.m.stats().misses(0);
    core.check_resident(0)?;

    let buf_base = core.layout.buf.base.0;
    while let Some(round) = program.next_round() {
        core.stats.rounds += 1;
        let r = core.stats.rounds;
        if let Round::Transfer(t) = round {
            validate_transfer(&t, &params, slow_blocks)?;
            let (buf, mem) = (
                core.layout.buf_block(t.frame),
                core.layout.mem_block(t.slow_block),
            );
            match t.direction {
                Direction::Load => core.copy(mem, buf)?,
                Direction::Store => core.copy(buf, mem)?,
            }
            core.stats.transfers += 1;
            core.check_resident(r)?;
        }
        let latency_before = core.m.stats().latency;
        let mut view = BufView {
            m: &mut core.m,
            base: buf_base,
            size: params.memory,
            touches: 0,
            work: 0,
        };
        program.compute(&mut view)?;
        core.stats.processing += view.touches + view.work;
        if core.m.stats().latency != latency_before {
            return Err(EmulationError::Violation {
                round: r,
                detail: "computation missed on Buf".into(),
            });
        }
    }
    core.stats.total_cost = core.m.cost() - warm;
    core.stats.misses = core.m.stats().misses(0) - warm_misses;
    let out = core.m.memory().dump_region(&core.layout.mem);
    Ok((out, core.stats))
}

/// Emulation on a direct-mapped cache. The program's frame count must not
/// exceed the cache's line count.
pub fn emulate(
    program: &mut dyn IoProgram,
    spec: &HierarchySpec,
    initial: &[Word],
    opts: EmulationOptions,
) -> Result<(Vec<Word>, EmulationStats), EmulationError> {
    let level = spec.level(0);
    if level.assoc != 1 {
        return Err(EmulationError::Config(
            "emulate expects a direct-mapped cache".into(),
        ));
    }
    if program.params().frames() > level.line_count() {
        return Err(EmulationError::Config("Buf larger than the cache".into()));
    }
    emulate_core(program, spec, initial, opts)
}

/// Emulation on an `A`-way set-associative cache of a program written for
/// half the cache.
pub fn emulate_assoc(
    program: &mut dyn IoProgram,
    spec: &HierarchySpec,
    initial: &[Word],
    opts: EmulationOptions,
) -> Result<(Vec<Word>, EmulationStats), EmulationError> {
    let level = spec.level(0);
    if 2 * program.params().frames() > level.line_count() {
        return Err(EmulationError::Config(
            "program must use at most half the cache".into(),
        ));
    }
    emulate_core(program, spec, initial, opts)
}

/// Emulation with Buf starting at a uniformly random set.
pub fn emulate_random_placement(
    program: &mut dyn IoProgram,
    spec: &HierarchySpec,
    initial: &[Word],
    seed: u64,
) -> Result<(Vec<Word>, EmulationStats), EmulationError> {
    let sets = spec.level(0).set_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = EmulationOptions {
        register_copy: false,
        buf_offset: rng.gen_range(0..sets),
    };
    emulate(program, spec, initial, opts)
}
