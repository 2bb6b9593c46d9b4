//! Trace-driven cache simulation: set-associative LRU levels, inclusive
//! hierarchies, the unit-cost + latency cost function and three-way miss
//! classification against a fully-associative shadow.

pub mod hierarchy;
pub mod level;
pub mod spec;
pub mod trace;

pub use hierarchy::{
    run_trace, AccessOutcome, Hierarchy, LevelStats, MissClass, RunStats, WatchId, MAX_LEVELS,
};
pub use spec::{map_block, map_set, CacheLevelSpec, HierarchySpec, SpecError};
pub use trace::{format_trace, parse_trace, TraceError};
