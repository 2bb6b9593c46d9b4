//! Multiway mergesort as an explicit-I/O program.
//!
//! Slow memory holds two areas of `n = ⌈N/B⌉` blocks; passes ping-pong between
//! them and the run-formation target is chosen so the sorted result lands in
//! the first area. Run formation sorts `M`-word chunks in fast memory. Each
//! merge pass combines up to `d` runs using frames `0..d` for the leading
//! blocks and frame `d` for output. The heap is program state; every heap
//! operation charges `⌈log₂ d⌉` units of work.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{Direction, FastMemory, IoError, IoParams, IoProgram, Round, Transfer};
use crate::memory::Word;

fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as u64
    }
}

#[derive(Debug, Clone)]
enum Stage {
    /// Loading chunk `chunk`; sort once the queue drains.
    Form {
        chunk: u64,
        sorted: bool,
    },
    Merge(MergeState),
    Done,
}

#[derive(Debug, Clone)]
struct MergeState {
    pass: u64,
    group: u64,
    started: bool,
    pos: Vec<u64>,
    end: Vec<u64>,
    heap: BinaryHeap<Reverse<(Word, usize)>>,
    awaiting: Option<usize>,
    out_pos: u64,
    out_fill: u64,
}

#[derive(Debug, Clone)]
pub struct MergesortIo {
    params: IoParams,
    input: Vec<Word>,
    degree: u64,
    n_blocks: u64,
    passes: u64,
    queue: VecDeque<Transfer>,
    stage: Stage,
}

/// Builds the sorting program for `input` with merge degree `degree`
/// (default `m − 2` when `None`).
pub fn mergesort_io(
    input: &[Word],
    params: IoParams,
    degree: Option<u64>,
) -> Result<MergesortIo, IoError> {
    MergesortIo::new(input, params, degree)
}

impl MergesortIo {
    pub fn new(input: &[Word], params: IoParams, degree: Option<u64>) -> Result<Self, IoError> {
        if input.is_empty() {
            return Err(IoError::EmptyInput);
        }
        let m = params.frames();
        let max = m.saturating_sub(2);
        let degree = degree.unwrap_or(max);
        if degree < 2 || degree > max {
            return Err(IoError::BadDegree { degree, max });
        }
        let n = input.len() as u64;
        let n_blocks = n.div_ceil(params.block);
        let mut runs = n.div_ceil(params.memory);
        let mut passes = 0;
        while runs > 1 {
            runs = runs.div_ceil(degree);
            passes += 1;
        }
        let mut p = MergesortIo {
            params,
            input: input.to_vec(),
            degree,
            n_blocks,
            passes,
            queue: VecDeque::new(),
            stage: Stage::Done,
        };
        p.start_chunk(0);
        Ok(p)
    }

    /// Number of merge passes after run formation.
    pub fn passes(&self) -> u64 {
        self.passes
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn len(&self) -> u64 {
        self.input.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    /// First block of area `a` (0 or 1).
    fn area(&self, a: u64) -> u64 {
        a * self.n_blocks
    }

    fn area_of_pass(&self, pass: u64) -> (u64, u64) {
        // Run formation writes into `form_target`; pass p reads the area written
        // by pass p-1 and writes the other one. The last pass must end in area 0.
        let form_target = self.passes % 2;
        let src = (form_target + pass) % 2;
        (src, 1 - src)
    }

    fn start_chunk(&mut self, chunk: u64) {
        let m = self.params.frames();
        let first = chunk * m;
        if first >= self.n_blocks {
            self.start_pass(0);
            return;
        }
        let last = (first + m).min(self.n_blocks);
        for (frame, blk) in (first..last).enumerate() {
            self.queue.push_back(Transfer {
                direction: Direction::Load,
                slow_block: self.area(0) + blk,
                frame: frame as u64,
            });
        }
        self.stage = Stage::Form {
            chunk,
            sorted: false,
        };
    }

    fn start_pass(&mut self, pass: u64) {
        if pass >= self.passes {
            self.stage = Stage::Done;
            return;
        }
        self.stage = Stage::Merge(MergeState {
            pass,
            group: 0,
            started: false,
            pos: Vec::new(),
            end: Vec::new(),
            heap: BinaryHeap::new(),
            awaiting: None,
            out_pos: 0,
            out_fill: 0,
        });
        self.start_group();
    }

    fn run_len(&self, pass: u64) -> u64 {
        self.params.memory * self.degree.pow(pass as u32)
    }

    /// Queues the first-block loads of the current group, or advances to the
    /// next pass when the group lies past the end of the input.
    fn start_group(&mut self) {
        let n = self.len();
        let b = self.params.block;
        let (pass, group) = match &self.stage {
            Stage::Merge(s) => (s.pass, s.group),
            _ => unreachable!(),
        };
        let r = self.run_len(pass);
        let lo = group * r * self.degree;
        if lo >= n {
            self.start_pass(pass + 1);
            return;
        }
        let (src, _) = self.area_of_pass(pass);
        let src_base = self.area(src);
        let mut pos = Vec::new();
        let mut end = Vec::new();
        let mut loads = Vec::new();
        for j in 0..self.degree {
            let start = lo + j * r;
            if start >= n {
                break;
            }
            pos.push(start);
            end.push((start + r).min(n));
            loads.push(Transfer {
                direction: Direction::Load,
                slow_block: src_base + start / b,
                frame: j,
            });
        }
        self.queue.extend(loads);
        if let Stage::Merge(s) = &mut self.stage {
            s.pos = pos;
            s.end = end;
            s.started = false;
            s.heap.clear();
            s.out_pos = lo;
            s.out_fill = 0;
        }
    }

    fn form_compute(&mut self, chunk: u64, fast: &mut dyn FastMemory) -> Result<(), IoError> {
        let b = self.params.block;
        let m = self.params.frames();
        let n = self.len();
        let lo = chunk * m * b;
        let hi = ((chunk + 1) * m * b).min(n);
        let len = hi - lo;
        let mut vals = Vec::with_capacity(len as usize);
        for i in 0..len {
            vals.push(fast.read(i)?);
        }
        vals.sort_unstable();
        fast.work(len * ceil_log2(len));
        for (i, v) in vals.into_iter().enumerate() {
            fast.write(i as u64, v)?;
        }
        let target = self.area(self.passes % 2);
        let blocks = len.div_ceil(b);
        for f in 0..blocks {
            self.queue.push_back(Transfer {
                direction: Direction::Store,
                slow_block: target + lo / b + f,
                frame: f,
            });
        }
        Ok(())
    }

    fn merge_compute(&mut self, fast: &mut dyn FastMemory) -> Result<(), IoError> {
        if !self.queue.is_empty() {
            return Ok(());
        }
        let b = self.params.block;
        let d = self.degree;
        let log_d = ceil_log2(d).max(1);
        let pass = match &self.stage {
            Stage::Merge(s) => s.pass,
            _ => unreachable!(),
        };
        let (src, dst) = self.area_of_pass(pass);
        let (src_base, dst_base) = (self.area(src), self.area(dst));
        let Stage::Merge(s) = &mut self.stage else {
            unreachable!()
        };
        if let Some(j) = s.awaiting.take() {
            let v = fast.read(j as u64 * b)?;
            s.heap.push(Reverse((v, j)));
            fast.work(log_d);
        }
        if !s.started {
            for j in 0..s.pos.len() {
                let v = fast.read(j as u64 * b)?;
                s.heap.push(Reverse((v, j)));
                fast.work(log_d);
            }
            s.started = true;
        }
        while self.queue.is_empty() {
            let Some(Reverse((v, j))) = s.heap.pop() else {
                if s.out_fill > 0 {
                    self.queue.push_back(Transfer {
                        direction: Direction::Store,
                        slow_block: dst_base + s.out_pos / b,
                        frame: d,
                    });
                    s.out_fill = 0;
                    return Ok(());
                }
                s.group += 1;
                self.start_group();
                return Ok(());
            };
            fast.work(log_d);
            fast.write(d * b + s.out_fill, v)?;
            s.out_fill += 1;
            if s.out_fill == b {
                self.queue.push_back(Transfer {
                    direction: Direction::Store,
                    slow_block: dst_base + s.out_pos / b,
                    frame: d,
                });
                s.out_pos += b;
                s.out_fill = 0;
            }
            s.pos[j] += 1;
            if s.pos[j] < s.end[j] {
                if s.pos[j] % b == 0 {
                    s.awaiting = Some(j);
                    self.queue.push_back(Transfer {
                        direction: Direction::Load,
                        slow_block: src_base + s.pos[j] / b,
                        frame: j as u64,
                    });
                } else {
                    let v = fast.read(j as u64 * b + s.pos[j] % b)?;
                    s.heap.push(Reverse((v, j)));
                    fast.work(log_d);
                }
            }
        }
        Ok(())
    }
}

impl IoProgram for MergesortIo {
    fn params(&self) -> IoParams {
        self.params
    }

    fn slow_blocks(&self) -> u64 {
        2 * self.n_blocks
    }

    fn initial_slow(&self) -> Vec<Word> {
        let mut v = self.input.clone();
        v.resize((self.slow_blocks() * self.params.block) as usize, 0);
        v
    }

    fn next_round(&mut self) -> Option<Round> {
        if let Some(t) = self.queue.pop_front() {
            return Some(Round::Transfer(t));
        }
        match self.stage {
            Stage::Done => None,
            _ => Some(Round::Compute),
        }
    }

    fn compute(&mut self, fast: &mut dyn FastMemory) -> Result<(), IoError> {
        match self.stage.clone() {
            Stage::Form { chunk, sorted } => {
                if !self.queue.is_empty() {
                    return Ok(());
                }
                if !sorted {
                    self.form_compute(chunk, fast)?;
                    self.stage = Stage::Form {
                        chunk,
                        sorted: true,
                    };
                } else {
                    self.start_chunk(chunk + 1);
                }
                Ok(())
            }
            Stage::Merge(_) => self.merge_compute(fast),
            Stage::Done => Ok(()),
        }
    }
}
