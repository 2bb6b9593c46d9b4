//! Multiway merging and mergesort run directly in the cache model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heap::Heap;
use super::{ceil_log2, AlgoError};
use crate::cache::{CacheLevelSpec, HierarchySpec, RunStats};
use crate::emulator::{emulate, EmulationOptions, EmulationStats};
use crate::io::{mergesort_io, IoParams, IoProgram};
use crate::machine::Machine;
use crate::memory::{Address, Region, Word};

/// Where run regions start relative to the cache sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunPlacement {
    /// Back to back.
    Contiguous,
    /// Each run at an independent uniform offset in `[0, s·B)` from a
    /// set-aligned base.
    Random,
    /// Every run starts at set 0.
    Cyclic,
}

/// Where the merge heap lives.
#[derive(Debug, Clone)]
pub enum HeapPolicy {
    /// Outside the address space; charged only as work.
    Registers,
    /// In a caller-placed region of at least `2k` words.
    Memory(Region),
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub output: Vec<Word>,
    /// References to run regions only.
    pub run_stats: RunStats,
    pub stats: RunStats,
}

/// Writes `runs` into fresh regions placed per `placement`.
pub fn place_runs(
    m: &mut Machine,
    runs: &[Vec<Word>],
    placement: RunPlacement,
    rng: &mut impl Rng,
) -> Result<Vec<Region>, AlgoError> {
    let level = *m.spec().level(0);
    let span = level.set_count() * level.block;
    let mut regions = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let len = (run.len() as u64).max(1);
        let name = format!("run{i}");
        let region = match placement {
            RunPlacement::Contiguous => m.alloc(&name, len, 1)?,
            RunPlacement::Cyclic => m.alloc(&name, len, span)?,
            RunPlacement::Random => {
                let slot = m.alloc(&name, len + span, span)?;
                Region {
                    base: Address(slot.base.0 + rng.gen_range(0..span)),
                    length: len,
                    alignment: 1,
                    name,
                }
            }
        };
        m.memory_mut().load_region(&region, run);
        regions.push(region);
    }
    Ok(regions)
}

/// Merges the sorted runs held in `runs` (region `i` holds `lens[i]` words).
/// Output goes to `output` when given, else to an unmodeled sink.
pub fn kway_merge_direct(
    m: &mut Machine,
    runs: &[Region],
    lens: &[u64],
    heap: HeapPolicy,
    output: Option<&Region>,
) -> Result<MergeOutcome, AlgoError> {
    let k = runs.len();
    if k < 2 {
        return Err(AlgoError::Argument(format!("merge degree {k} < 2")));
    }
    if lens.len() != k || runs.iter().zip(lens).any(|(r, &l)| l > r.length) {
        return Err(AlgoError::Argument(
            "run lengths do not fit their regions".into(),
        ));
    }
    let total: u64 = lens.iter().sum();
    if let Some(out) = output {
        if out.length < total {
            return Err(AlgoError::Argument("output region too small".into()));
        }
    }
    let watches: Vec<_> = runs.iter().map(|r| m.watch(r)).collect();
    let start = m.stats().clone();
    let mut heap = match heap {
        HeapPolicy::Registers => Heap::registers(),
        HeapPolicy::Memory(r) => {
            if r.length < 2 * k as u64 {
                return Err(AlgoError::Argument(
                    "heap region smaller than 2k words".into(),
                ));
            }
            Heap::memory(r)
        }
    };
    let mut pos = vec![0u64; k];
    for (i, r) in runs.iter().enumerate() {
        if lens[i] > 0 {
            let v = m.load(r.base.0);
            heap.push(m, (v, i as u64));
        }
    }
    let mut out_vals = Vec::with_capacity(total as usize);
    while let Some((v, i)) = heap.pop(m) {
        if let Some(out) = output {
            m.store(out.base.0 + out_vals.len() as u64, v);
        }
        out_vals.push(v);
        let i = i as usize;
        pos[i] += 1;
        if pos[i] < lens[i] {
            let v = m.load(runs[i].base.0 + pos[i]);
            heap.push(m, (v, i as u64));
        }
    }
    let mut run_stats = RunStats::new(m.cache().depth());
    for w in watches {
        run_stats.merge(m.cache().watch_stats(w));
    }
    Ok(MergeOutcome {
        output: out_vals,
        run_stats,
        stats: diff(m.stats(), &start),
    })
}

/// `a − b` field by field.
pub(crate) fn diff(a: &RunStats, b: &RunStats) -> RunStats {
    let mut d = a.clone();
    d.references -= b.references;
    d.ops -= b.ops;
    d.work -= b.work;
    d.latency -= b.latency;
    for (x, y) in d.levels.iter_mut().zip(&b.levels) {
        x.accesses -= y.accesses;
        x.hits -= y.hits;
        x.misses -= y.misses;
        x.compulsory -= y.compulsory;
        x.capacity -= y.capacity;
        x.conflict -= y.conflict;
        x.fa_misses -= y.fa_misses;
        x.fa_only_misses -= y.fa_only_misses;
        x.phase_remisses -= y.phase_remisses;
    }
    d
}

/// `d`-way mergesort written directly against a cache of `memory` words:
/// `memory`-word runs sorted in place, then merge passes between two arrays
/// with the heap stored in a third region.
pub fn mergesort_direct(
    m: &mut Machine,
    input: &[Word],
    memory: u64,
    degree: Option<u64>,
) -> Result<(Vec<Word>, RunStats), AlgoError> {
    let b = m.spec().level(0).block;
    let params = IoParams::new(memory, b)?;
    let d = degree.unwrap_or(params.frames() - 2);
    if d < 2 {
        return Err(AlgoError::Argument(format!("merge degree {d} < 2")));
    }
    let n = input.len() as u64;
    if n == 0 {
        return Ok((Vec::new(), RunStats::new(m.cache().depth())));
    }
    let start = m.stats().clone();
    let mut src = m.alloc("A", n, b)?;
    let mut dst = m.alloc("A'", n, b)?;
    let heap_region = m.alloc("heap", 2 * d, b)?;
    m.memory_mut().load_region(&src, input);

    let mut lo = 0;
    while lo < n {
        let hi = (lo + memory).min(n);
        let mut chunk: Vec<Word> = (lo..hi).map(|i| m.load(src.base.0 + i)).collect();
        chunk.sort_unstable();
        m.work((hi - lo) * ceil_log2(hi - lo));
        for (i, v) in chunk.into_iter().enumerate() {
            m.store(src.base.0 + lo + i as u64, v);
        }
        lo = hi;
    }

    let mut r = memory;
    while r < n {
        let mut g = 0;
        while g < n {
            let mut runs = Vec::new();
            let mut lens = Vec::new();
            for j in 0..d {
                let s = g + j * r;
                if s >= n {
                    break;
                }
                let e = (s + r).min(n);
                runs.push(Region {
                    name: format!("run{j}"),
                    base: Address(src.base.0 + s),
                    length: e - s,
                    alignment: 1,
                });
                lens.push(e - s);
            }
            let len: u64 = lens.iter().sum();
            let out = Region {
                name: "out".into(),
                base: Address(dst.base.0 + g),
                length: len,
                alignment: 1,
            };
            if runs.len() == 1 {
                for i in 0..len {
                    m.mv(runs[0].base.0 + i, out.base.0 + i);
                }
            } else {
                merge_into(m, &runs, &lens, &heap_region, &out);
            }
            g += r * d;
        }
        std::mem::swap(&mut src, &mut dst);
        r = r.saturating_mul(d);
    }
    let out = m.memory().dump_region(&src);
    Ok((out, diff(m.stats(), &start)))
}

/// Heap-in-memory merge without the bookkeeping of `kway_merge_direct`.
fn merge_into(m: &mut Machine, runs: &[Region], lens: &[u64], heap_region: &Region, out: &Region) {
    let mut heap = Heap::memory(heap_region.clone());
    let mut pos = vec![0u64; runs.len()];
    for (i, r) in runs.iter().enumerate() {
        let v = m.load(r.base.0);
        heap.push(m, (v, i as u64));
    }
    let mut o = 0;
    while let Some((v, i)) = heap.pop(m) {
        m.store(out.base.0 + o, v);
        o += 1;
        let i = i as usize;
        pos[i] += 1;
        if pos[i] < lens[i] {
            let v = m.load(runs[i].base.0 + pos[i]);
            heap.push(m, (v, i as u64));
        }
    }
}

/// Sorts `input` with the I/O-model mergesort emulated on a direct-mapped
/// cache of `memory` words, block `block`, latency `latency`.
pub fn mergesort_emulated(
    input: &[Word],
    memory: u64,
    block: u64,
    latency: u64,
) -> Result<(Vec<Word>, EmulationStats), AlgoError> {
    let params = IoParams::new(memory, block)?;
    let mut prog = mergesort_io(input, params, None)?;
    let spec = HierarchySpec::single(CacheLevelSpec::direct_mapped(memory, block, latency)?)?;
    let init = prog.initial_slow();
    let (mem, stats) = emulate(&mut prog, &spec, &init, EmulationOptions::default())?;
    Ok((mem[..input.len()].to_vec(), stats))
}

/// Whether `d / s < 1 / d³`.
pub fn randshift_condition(d: u64, s: u64) -> bool {
    (d as f64) / (s as f64) < 1.0 / (d as f64).powi(3)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandshiftReport {
    pub output: Vec<Word>,
    pub stats: RunStats,
    pub degree: u64,
    pub passes: u64,
    pub seed: u64,
}

/// Run stored cyclically rotated: element `t` at `start + (t + shift) mod len`.
#[derive(Debug, Clone, Copy)]
struct Rotated {
    start: u64,
    len: u64,
    shift: u64,
}

impl Rotated {
    fn addr(&self, t: u64) -> u64 {
        self.start + (t + self.shift) % self.len
    }
}

/// Mergesort on a hierarchy: runs of `B₁` sorted in registers, then `d`-way
/// merge passes; every run produced is rotated by a uniform shift drawn from
/// `[0, M_k − 1]` (reduced modulo the run length). The last pass is written
/// unrotated.
pub fn mergesort_randshift(
    m: &mut Machine,
    input: &[Word],
    degree: u64,
    seed: u64,
) -> Result<RandshiftReport, AlgoError> {
    if degree < 2 {
        return Err(AlgoError::Argument(format!("merge degree {degree} < 2")));
    }
    let b1 = m.spec().level(0).block;
    let mk = m.spec().last().capacity;
    let n = input.len() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = m.stats().clone();
    if n == 0 {
        return Ok(RandshiftReport {
            output: Vec::new(),
            stats: RunStats::new(m.cache().depth()),
            degree,
            passes: 0,
            seed,
        });
    }
    let align = m.spec().last().block;
    let mut src = m.alloc("A", n, align)?;
    let mut dst = m.alloc("A'", n, align)?;
    m.memory_mut().load_region(&src, input);

    let mut total_passes = 0;
    let mut r = b1;
    while r < n {
        r = r.saturating_mul(degree);
        total_passes += 1;
    }
    let shift_for = |rng: &mut ChaCha8Rng, len: u64, last: bool| {
        if last {
            0
        } else {
            rng.gen_range(0..mk) % len
        }
    };

    // run formation, in place
    let mut runs = Vec::new();
    let mut lo = 0;
    while lo < n {
        let hi = (lo + b1).min(n);
        let mut chunk: Vec<Word> = (lo..hi).map(|i| m.load(src.base.0 + i)).collect();
        chunk.sort_unstable();
        m.work((hi - lo) * ceil_log2(hi - lo));
        let rot = Rotated {
            start: src.base.0 + lo,
            len: hi - lo,
            shift: shift_for(&mut rng, hi - lo, total_passes == 0),
        };
        for (t, v) in chunk.into_iter().enumerate() {
            m.store(rot.addr(t as u64), v);
        }
        runs.push(rot);
        lo = hi;
    }

    let mut pass = 0;
    while runs.len() > 1 {
        pass += 1;
        let last = pass == total_passes;
        let mut next = Vec::new();
        for group in runs.chunks(degree as usize) {
            let first = group[0].start - src.base.0;
            let len: u64 = group.iter().map(|r| r.len).sum();
            let out = Rotated {
                start: dst.base.0 + first,
                len,
                shift: shift_for(&mut rng, len, last),
            };
            let mut heap = Heap::registers();
            let mut pos = vec![0u64; group.len()];
            for (i, r) in group.iter().enumerate() {
                let v = m.load(r.addr(0));
                heap.push(m, (v, i as u64));
            }
            let mut o = 0;
            while let Some((v, i)) = heap.pop(m) {
                m.store(out.addr(o), v);
                o += 1;
                let i = i as usize;
                pos[i] += 1;
                if pos[i] < group[i].len {
                    let v = m.load(group[i].addr(pos[i]));
                    heap.push(m, (v, i as u64));
                }
            }
            next.push(out);
        }
        runs = next;
        std::mem::swap(&mut src, &mut dst);
    }
    let out = m.memory().dump_region(&src);
    Ok(RandshiftReport {
        output: out,
        stats: diff(m.stats(), &start),
        degree,
        passes: pass,
        seed,
    })
}
