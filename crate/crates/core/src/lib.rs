//! A cache-model laboratory.
//!
//! The crate simulates the three-parameter cache model (capacity, block size,
//! miss latency) and its multi-level, limited-associativity extension; runs
//! explicit-I/O programs and their emulation in the cache model; and
//! instruments multiway mergesort, funnel sort and blocked matrix transpose so
//! their miss counts and costs can be compared against closed-form bounds.

pub mod algorithms;
pub mod analysis;
pub mod cache;
pub mod cli;
pub mod emulator;
pub mod io;
pub mod machine;
pub mod memory;

pub use cache::{CacheLevelSpec, Hierarchy, HierarchySpec, MissClass, RunStats};
pub use machine::Machine;
pub use memory::{Address, MemoryLayout, Region, SimMemory, Word};

pub type LevelParams32 = analysis::LevelParams<f32>;
pub type LevelParams64 = analysis::LevelParams<f64>;
pub type BoundInputs32 = analysis::BoundInputs<f32>;
pub type BoundInputs64 = analysis::BoundInputs<f64>;
pub type ConflictBound32 = analysis::ConflictBound<f32>;
pub type ConflictBound64 = analysis::ConflictBound<f64>;
