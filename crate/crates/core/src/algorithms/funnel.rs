//! Funnel sort on the simulated cache.
//!
//! An input of `n` words is split into `k = next_pow2(⌈n^{1/3}⌉)` segments,
//! each sorted recursively, and merged by one invocation of a `k`-merger. A
//! `k`-merger of height `h = log₂ k` is a top merger of degree `2^⌊h/2⌋` fed
//! by cyclic buffers, each filled by a bottom merger of degree `2^⌈h/2⌉`. A
//! buffer holds twice one bottom invocation's output. 2-mergers are the base
//! case and every 2-merger invocation is recorded as a cache phase.
//!
//! Exhausted inputs are handled by counting the elements each merger still
//! has to deliver rather than by sentinels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::merge::diff;
use super::{ceil_log2, AlgoError};
use crate::cache::RunStats;
use crate::machine::Machine;
use crate::memory::{Address, Region, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelOptions {
    pub seed: u64,
    /// Place buffers at random gaps and random start offsets.
    pub randomize: bool,
}

impl Default for FunnelOptions {
    fn default() -> Self {
        FunnelOptions {
            seed: 0,
            randomize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunnelReport {
    pub output: Vec<Word>,
    pub stats: RunStats,
    /// References made inside 2-merger invocations.
    pub phase_stats: RunStats,
    pub two_merger_invocations: u64,
    pub merger_invocations: u64,
    /// Top-level segment count.
    pub segments: u64,
    /// References made by the top-level merge alone.
    pub top_merge: RunStats,
    /// References made inside the top-level merger's 2-merger invocations.
    pub top_phase: RunStats,
    /// Element passages through a 2-merger that saw a level-1 re-miss in
    /// the same invocation. Each element is charged at most once per
    /// 2-merger it passes through.
    pub conflict_charged: u64,
    /// `conflict_charged` restricted to the top-level merge.
    pub top_conflict_charged: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
enum Input {
    Run(usize),
    Buf(usize),
}

#[derive(Debug, Clone, Copy)]
enum Sink {
    Out,
    Buf(usize),
}

#[derive(Debug)]
struct RunCursor {
    base: u64,
    len: u64,
    pos: u64,
}

#[derive(Debug)]
struct Buffer {
    base: u64,
    cap: u64,
    start: u64,
    head: u64,
    count: u64,
    producer: usize,
}

impl Buffer {
    fn slot(&self, i: u64) -> u64 {
        self.base + (self.start + i) % self.cap
    }
}

#[derive(Debug)]
enum Kind {
    Two([Input; 2]),
    Composite {
        top: usize,
        bottoms: Vec<usize>,
        bufs: Vec<usize>,
        top_k: u64,
    },
}

#[derive(Debug)]
struct Node {
    k: u64,
    kind: Kind,
    sink: Sink,
    remaining: u64,
}

struct Merger<'a> {
    m: &'a mut Machine,
    rng: &'a mut ChaCha8Rng,
    randomize: bool,
    span: u64,
    runs: Vec<RunCursor>,
    bufs: Vec<Buffer>,
    nodes: Vec<Node>,
    out_base: u64,
    out_pos: u64,
    phase: RunStats,
    twos: u64,
    invocations: u64,
    charged: u64,
}

impl Merger<'_> {
    fn supply(&self, i: Input) -> u64 {
        match i {
            Input::Run(r) => self.runs[r].len,
            Input::Buf(b) => self.nodes[self.bufs[b].producer].remaining,
        }
    }

    fn alloc_buffer(&mut self, cap: u64, producer: usize) -> Result<usize, AlgoError> {
        let (gap, start) = if self.randomize {
            (self.rng.gen_range(0..self.span), self.rng.gen_range(0..cap))
        } else {
            (0, 0)
        };
        let r = self.m.alloc("funnel-buffer", gap + cap, 1)?;
        self.bufs.push(Buffer {
            base: r.base.0 + gap,
            cap,
            start,
            head: 0,
            count: 0,
            producer,
        });
        Ok(self.bufs.len() - 1)
    }

    fn build(&mut self, k: u64, inputs: &[Input], sink: Sink) -> Result<usize, AlgoError> {
        debug_assert_eq!(inputs.len() as u64, k);
        let remaining = inputs.iter().map(|&i| self.supply(i)).sum();
        if k == 2 {
            self.nodes.push(Node {
                k,
                kind: Kind::Two([inputs[0], inputs[1]]),
                sink,
                remaining,
            });
            return Ok(self.nodes.len() - 1);
        }
        let h = ceil_log2(k);
        let top_k = 1u64 << (h / 2);
        let bottom_k = k / top_k;
        let cap = 2 * bottom_k.pow(3);
        let mut bottoms = Vec::with_capacity(top_k as usize);
        let mut bufs = Vec::with_capacity(top_k as usize);
        for i in 0..top_k as usize {
            // reserve the buffer index first so the bottom can write into it
            let b = self.alloc_buffer(cap, usize::MAX)?;
            let chunk = &inputs[i * bottom_k as usize..(i + 1) * bottom_k as usize];
            let node = self.build(bottom_k, chunk, Sink::Buf(b))?;
            self.bufs[b].producer = node;
            bottoms.push(node);
            bufs.push(b);
        }
        let top_inputs: Vec<Input> = bufs.iter().map(|&b| Input::Buf(b)).collect();
        let top = self.build(top_k, &top_inputs, sink)?;
        self.nodes.push(Node {
            k,
            kind: Kind::Composite {
                top,
                bottoms,
                bufs,
                top_k,
            },
            sink,
            remaining,
        });
        Ok(self.nodes.len() - 1)
    }

    fn available(&self, i: Input) -> u64 {
        match i {
            Input::Run(r) => self.runs[r].len - self.runs[r].pos,
            Input::Buf(b) => self.bufs[b].count,
        }
    }

    fn head_addr(&self, i: Input) -> u64 {
        match i {
            Input::Run(r) => self.runs[r].base + self.runs[r].pos,
            Input::Buf(b) => {
                let buf = &self.bufs[b];
                buf.slot(buf.head)
            }
        }
    }

    fn advance(&mut self, i: Input) {
        match i {
            Input::Run(r) => self.runs[r].pos += 1,
            Input::Buf(b) => {
                let buf = &mut self.bufs[b];
                buf.head += 1;
                buf.count -= 1;
            }
        }
    }

    fn emit(&mut self, sink: Sink, v: Word) -> Result<(), AlgoError> {
        match sink {
            Sink::Out => {
                self.m.store(self.out_base + self.out_pos, v);
                self.out_pos += 1;
            }
            Sink::Buf(b) => {
                let buf = &self.bufs[b];
                if buf.count == buf.cap {
                    return Err(AlgoError::Invariant("funnel buffer overflow".into()));
                }
                let a = buf.slot(buf.head + buf.count);
                self.m.store(a, v);
                self.bufs[b].count += 1;
            }
        }
        Ok(())
    }

    fn invoke(&mut self, id: usize) -> Result<u64, AlgoError> {
        self.invocations += 1;
        let k = self.nodes[id].k;
        let target = k.pow(3).min(self.nodes[id].remaining);
        let produced = match &self.nodes[id].kind {
            Kind::Two(inputs) => {
                let inputs = *inputs;
                let sink = self.nodes[id].sink;
                self.twos += 1;
                let before = self.m.stats().clone();
                self.m.cache_mut().begin_phase();
                let r = self.merge_two(inputs, sink, target);
                self.m.cache_mut().end_phase();
                let d = diff(self.m.stats(), &before);
                self.phase.merge(&d);
                r?
            }
            Kind::Composite {
                top,
                bottoms,
                bufs,
                top_k,
            } => {
                let (top, bottoms, bufs, top_k) = (*top, bottoms.clone(), bufs.clone(), *top_k);
                let mut produced = 0;
                while produced < target {
                    for (&b, &bottom) in bufs.iter().zip(&bottoms) {
                        if self.bufs[b].count < self.bufs[b].cap / 2
                            && self.nodes[bottom].remaining > 0
                        {
                            self.invoke(bottom)?;
                        }
                        let have = self.bufs[b].count;
                        let need = top_k.pow(3).min(have + self.nodes[bottom].remaining);
                        if have < need {
                            return Err(AlgoError::Invariant(format!(
                                "buffer holds {have} < {need} before top invocation"
                            )));
                        }
                    }
                    let p = self.invoke(top)?;
                    if p == 0 {
                        return Err(AlgoError::Invariant("top merger made no progress".into()));
                    }
                    produced += p;
                }
                produced
            }
        };
        if produced != target {
            return Err(AlgoError::Invariant(format!(
                "{k}-merger produced {produced}, expected {target}"
            )));
        }
        self.nodes[id].remaining -= produced;
        Ok(produced)
    }

    /// Both heads are read from memory on every step.
    fn merge_two(&mut self, inputs: [Input; 2], sink: Sink, target: u64) -> Result<u64, AlgoError> {
        let mut produced = 0;
        while produced < target {
            let remisses = self.m.stats().levels[0].phase_remisses;
            let mut best: Option<(Word, usize)> = None;
            for (j, &inp) in inputs.iter().enumerate() {
                if self.available(inp) == 0 {
                    if self.supply_left(inp) > 0 {
                        return Err(AlgoError::Invariant("2-merger input ran dry".into()));
                    }
                    continue;
                }
                let v = self.m.load(self.head_addr(inp));
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, j));
                }
            }
            let Some((v, j)) = best else {
                return Err(AlgoError::Invariant("2-merger has no input".into()));
            };
            self.m.work(1);
            self.advance(inputs[j]);
            self.emit(sink, v)?;
            if self.m.stats().levels[0].phase_remisses != remisses {
                self.charged += 1;
            }
            produced += 1;
        }
        Ok(produced)
    }

    /// Elements still to arrive at input `i`, not counting those available.
    fn supply_left(&self, i: Input) -> u64 {
        match i {
            Input::Run(_) => 0,
            Input::Buf(b) => self.nodes[self.bufs[b].producer].remaining,
        }
    }
}

fn cbrt_ceil(n: u64) -> u64 {
    let mut c = (n as f64).cbrt().round() as u64;
    while c.pow(3) < n {
        c += 1;
    }
    while c > 1 && (c - 1).pow(3) >= n {
        c -= 1;
    }
    c
}

/// Merger degree for `n` elements.
pub(crate) fn segments_for(n: u64) -> u64 {
    cbrt_ceil(n).next_power_of_two().max(2)
}

struct Sorter<'a> {
    m: &'a mut Machine,
    rng: ChaCha8Rng,
    randomize: bool,
    span: u64,
    /// The two arrays, `[0]` holds the input.
    arrays: [u64; 2],
    total: u64,
    phase: RunStats,
    twos: u64,
    invocations: u64,
    charged: u64,
    top: Option<(RunStats, RunStats, u64)>,
}

impl Sorter<'_> {
    /// Sorts the `len` words at offset `lo` of array `side`; returns the
    /// array that holds the result.
    fn sort(&mut self, side: usize, lo: u64, len: u64) -> Result<usize, AlgoError> {
        if len <= 1 {
            return Ok(side);
        }
        let base = self.arrays[side] + lo;
        if len <= 4 {
            let mut v: Vec<Word> = (0..len).map(|i| self.m.load(base + i)).collect();
            v.sort_unstable();
            self.m.work(len * ceil_log2(len));
            for (i, x) in v.into_iter().enumerate() {
                self.m.store(base + i as u64, x);
            }
            return Ok(side);
        }
        let k = segments_for(len);
        let seg = len.div_ceil(k);
        let mut runs = Vec::with_capacity(k as usize);
        let mut sides = Vec::with_capacity(k as usize);
        for j in 0..k {
            let s = (j * seg).min(len);
            let e = ((j + 1) * seg).min(len);
            let at = self.sort(side, lo + s, e - s)?;
            sides.push(at);
            runs.push((s, e - s));
        }
        // Runs must all sit on one side so the other can take the output.
        let src = if sides.iter().filter(|&&s| s == side).count() * 2 > sides.len() {
            side
        } else {
            1 - side
        };
        for (j, &(s, l)) in runs.iter().enumerate() {
            if sides[j] != src {
                for i in 0..l {
                    self.m.mv(
                        self.arrays[sides[j]] + lo + s + i,
                        self.arrays[src] + lo + s + i,
                    );
                }
            }
        }
        let dst = 1 - src;
        let mark = self.m.mark();
        let mut merger = Merger {
            m: &mut *self.m,
            rng: &mut self.rng,
            randomize: self.randomize,
            span: self.span,
            runs: runs
                .iter()
                .map(|&(s, l)| RunCursor {
                    base: self.arrays[src] + lo + s,
                    len: l,
                    pos: 0,
                })
                .collect(),
            bufs: Vec::new(),
            nodes: Vec::new(),
            out_base: self.arrays[dst] + lo,
            out_pos: 0,
            phase: RunStats::new(self.phase.levels.len()),
            twos: 0,
            invocations: 0,
            charged: 0,
        };
        let inputs: Vec<Input> = (0..k as usize).map(Input::Run).collect();
        let before = merger.m.stats().clone();
        let root = merger.build(k, &inputs, Sink::Out)?;
        let produced = merger.invoke(root)?;
        if produced != len || merger.out_pos != len {
            return Err(AlgoError::Invariant(format!(
                "root merger produced {produced} of {len}"
            )));
        }
        if lo == 0 && len == self.total {
            self.top = Some((
                diff(merger.m.stats(), &before),
                merger.phase.clone(),
                merger.charged,
            ));
        }
        self.phase.merge(&merger.phase);
        self.twos += merger.twos;
        self.invocations += merger.invocations;
        self.charged += merger.charged;
        self.m.release(mark);
        Ok(dst)
    }
}

/// Funnel sort of `input`; buffer placement is driven by `opts.seed`.
pub fn funnel_sort(
    m: &mut Machine,
    input: &[Word],
    opts: FunnelOptions,
) -> Result<FunnelReport, AlgoError> {
    let n = input.len() as u64;
    let level = *m.spec().level(0);
    let span = level.set_count() * level.block;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start = m.stats().clone();
    let a = m.alloc("funnel-A", n.max(1), level.block)?;
    let gap = if opts.randomize {
        rng.gen_range(0..span)
    } else {
        0
    };
    let b_slot = m.alloc("funnel-B", n.max(1) + gap, 1)?;
    let b = Region {
        name: "funnel-B".into(),
        base: Address(b_slot.base.0 + gap),
        length: n.max(1),
        alignment: 1,
    };
    m.memory_mut().load_region(&a, input);
    let depth = m.cache().depth();
    let mut s = Sorter {
        m,
        rng,
        randomize: opts.randomize,
        span,
        arrays: [a.base.0, b.base.0],
        total: n,
        phase: RunStats::new(depth),
        twos: 0,
        invocations: 0,
        charged: 0,
        top: None,
    };
    let side = s.sort(0, 0, n)?;
    let (phase, twos, invocations, charged) = (s.phase, s.twos, s.invocations, s.charged);
    let (top_merge, top_phase, top_charged) = s
        .top
        .unwrap_or_else(|| (RunStats::new(depth), RunStats::new(depth), 0));
    let region = if side == 0 { &a } else { &b };
    let mut output = m.memory().dump_region(region);
    output.truncate(n as usize);
    Ok(FunnelReport {
        output,
        stats: diff(m.stats(), &start),
        phase_stats: phase,
        two_merger_invocations: twos,
        merger_invocations: invocations,
        segments: if n > 4 { segments_for(n) } else { 1 },
        top_merge,
        top_phase,
        conflict_charged: charged,
        top_conflict_charged: top_charged,
        seed: opts.seed,
    })
}
