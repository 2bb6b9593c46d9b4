//! Cache-instrumented algorithms: multiway merging and mergesort in several
//! variants, funnel sort, and the multi-level matrix transpose.

mod data;
mod funnel;
mod heap;
mod merge;
mod transpose;

pub use data::{format_matrix, format_values, parse_matrix, parse_values, DataError};
pub use funnel::{funnel_sort, FunnelOptions, FunnelReport};
pub use merge::{
    kway_merge_direct, mergesort_direct, mergesort_emulated, mergesort_randshift, place_runs,
    randshift_condition, HeapPolicy, MergeOutcome, RandshiftReport, RunPlacement,
};
pub use transpose::{
    gather_submatrix, scatter_submatrix, transpose_multilevel, GatherReport, Matrix,
    TransposeOptions, TransposeReport,
};

use thiserror::Error;

use crate::cache::SpecError;
use crate::emulator::EmulationError;
use crate::io::IoError;
use crate::memory::MemoryError;

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Emulation(#[from] EmulationError),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// `⌈log₂ x⌉`, with 0 for x ≤ 1.
pub(crate) fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as u64
    }
}
