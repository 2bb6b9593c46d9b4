//! Explicit-I/O machine: a fast memory of `M` words in `m = M/B` frames and an
//! unbounded slow memory of `B`-word blocks. Programs run in rounds of at most
//! one block transfer followed by computation on fast memory.

mod mergesort;
mod random;

pub use mergesort::{mergesort_io, MergesortIo};
pub use random::RandomProgram;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::Word;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IoError {
    #[error("invalid I/O parameters: {0}")]
    Params(String),
    #[error("frame {frame} out of range (m = {frames})")]
    FrameOutOfRange { frame: u64, frames: u64 },
    #[error("slow block {block} out of range ({blocks} blocks)")]
    SlowBlockOutOfRange { block: u64, blocks: u64 },
    #[error("fast-memory offset {offset} out of range (M = {size})")]
    FastOutOfRange { offset: u64, size: u64 },
    #[error("merge degree {degree} outside 2..={max}")]
    BadDegree { degree: u64, max: u64 },
    #[error("input must hold at least one word")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoParams {
    /// Fast-memory size `M` in words.
    pub memory: u64,
    /// Block size `B` in words.
    pub block: u64,
}

impl IoParams {
    pub fn new(memory: u64, block: u64) -> Result<Self, IoError> {
        if block == 0 || !memory.is_multiple_of(block) {
            return Err(IoError::Params(format!(
                "B = {block} must divide M = {memory}"
            )));
        }
        if memory < 3 * block {
            return Err(IoError::Params(format!(
                "M = {memory} must hold at least three blocks of {block}"
            )));
        }
        Ok(IoParams { memory, block })
    }

    /// `m = M / B`
    pub fn frames(&self) -> u64 {
        self.memory / self.block
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// slow block → fast frame
    Load,
    /// fast frame → slow block
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub direction: Direction,
    pub slow_block: u64,
    pub frame: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    Transfer(Transfer),
    /// A round that only computes.
    Compute,
}

/// Fast memory as seen by a program's computation. Reads and writes are
/// word touches; `work` charges register-only bookkeeping.
pub trait FastMemory {
    fn read(&mut self, offset: u64) -> Result<Word, IoError>;
    fn write(&mut self, offset: u64, value: Word) -> Result<(), IoError>;
    fn work(&mut self, units: u64);
}

/// A round-structured I/O computation. Implementations are state machines;
/// clone one before running it if it must be replayed (for example once on
/// the I/O machine and once through the emulator).
pub trait IoProgram {
    fn params(&self) -> IoParams;

    /// Slow-memory size in blocks.
    fn slow_blocks(&self) -> u64;

    /// Initial slow-memory contents, `slow_blocks() * B` words.
    fn initial_slow(&self) -> Vec<Word>;

    /// The next round, or `None` when the program has finished.
    fn next_round(&mut self) -> Option<Round>;

    /// Computation following the round last returned by `next_round`.
    fn compute(&mut self, fast: &mut dyn FastMemory) -> Result<(), IoError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoStats {
    /// `T`: block transfers.
    pub transfers: u64,
    /// Fast-memory word reads and writes.
    pub touches: u64,
    /// Register-only bookkeeping units.
    pub work: u64,
    pub rounds: u64,
}

impl IoStats {
    /// `I`: total processing, touches plus bookkeeping.
    pub fn processing(&self) -> u64 {
        self.touches + self.work
    }
}

struct PlainFast<'a> {
    words: &'a mut [Word],
    touches: u64,
    work: u64,
}

impl FastMemory for PlainFast<'_> {
    fn read(&mut self, offset: u64) -> Result<Word, IoError> {
        let size = self.words.len() as u64;
        let w = self
            .words
            .get(offset as usize)
            .copied()
            .ok_or(IoError::FastOutOfRange { offset, size })?;
        self.touches += 1;
        Ok(w)
    }

    fn write(&mut self, offset: u64, value: Word) -> Result<(), IoError> {
        let size = self.words.len() as u64;
        let slot = self
            .words
            .get_mut(offset as usize)
            .ok_or(IoError::FastOutOfRange { offset, size })?;
        *slot = value;
        self.touches += 1;
        Ok(())
    }

    fn work(&mut self, units: u64) {
        self.work += units;
    }
}

/// Checks a transfer against the parameters and slow-memory size.
pub fn validate_transfer(t: &Transfer, params: &IoParams, slow_blocks: u64) -> Result<(), IoError> {
    if t.frame >= params.frames() {
        return Err(IoError::FrameOutOfRange {
            frame: t.frame,
            frames: params.frames(),
        });
    }
    if t.slow_block >= slow_blocks {
        return Err(IoError::SlowBlockOutOfRange {
            block: t.slow_block,
            blocks: slow_blocks,
        });
    }
    Ok(())
}

/// Runs `program` on the I/O machine starting from `slow`, returning the final
/// slow memory and the exact transfer / processing counts.
pub fn run_io(
    program: &mut dyn IoProgram,
    mut slow: Vec<Word>,
) -> Result<(Vec<Word>, IoStats), IoError> {
    let params = program.params();
    let b = params.block as usize;
    let blocks = program.slow_blocks();
    slow.resize(blocks as usize * b, 0);
    let mut fast = vec![0 as Word; params.memory as usize];
    let mut stats = IoStats::default();
    while let Some(round) = program.next_round() {
        stats.rounds += 1;
        if let Round::Transfer(t) = round {
            validate_transfer(&t, &params, blocks)?;
            let (s, f) = (t.slow_block as usize * b, t.frame as usize * b);
            match t.direction {
                Direction::Load => fast[f..f + b].copy_from_slice(&slow[s..s + b]),
                Direction::Store => slow[s..s + b].copy_from_slice(&fast[f..f + b]),
            }
            stats.transfers += 1;
        }
        let mut pf = PlainFast {
            words: &mut fast,
            touches: 0,
            work: 0,
        };
        program.compute(&mut pf)?;
        stats.touches += pf.touches;
        stats.work += pf.work;
    }
    Ok((slow, stats))
}
