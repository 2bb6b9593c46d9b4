//! Matrix transpose for a multi-level hierarchy.
//!
//! The matrix is cut into `B_k × B_k` tiles (`B_k` the last level's block).
//! Each tile is gathered row by row into a contiguous staging area,
//! transposed there by recursive subdivision with branching `B_{r}/B_{r-1}`
//! down to `B₁ × B₁` pieces, and scattered to its transposed position. Row
//! moves go straight across when source and destination occupy different
//! zones of the first-level cache and through a free block of a `4·B_k`
//! scratch area `X` otherwise.

use serde::{Deserialize, Serialize};

use super::merge::diff;
use super::AlgoError;
use crate::cache::RunStats;
use crate::machine::Machine;
use crate::memory::{Region, Word};

/// Row-major matrix stored in a region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub region: Region,
    pub rows: u64,
    pub cols: u64,
}

impl Matrix {
    pub fn new(region: Region, rows: u64, cols: u64) -> Result<Self, AlgoError> {
        if region.length != rows * cols {
            return Err(AlgoError::Argument(format!(
                "region of {} words cannot hold {rows}×{cols}",
                region.length
            )));
        }
        Ok(Matrix { region, rows, cols })
    }

    /// Allocates a `rows × cols` matrix aligned to `align` words.
    pub fn alloc(
        m: &mut Machine,
        name: &str,
        rows: u64,
        cols: u64,
        align: u64,
    ) -> Result<Self, AlgoError> {
        let region = m.alloc(name, (rows * cols).max(1), align)?;
        Ok(Matrix {
            region: Region {
                length: rows * cols,
                ..region
            },
            rows,
            cols,
        })
    }

    pub fn addr(&self, r: u64, c: u64) -> u64 {
        self.region.base.0 + r * self.cols + c
    }

    pub fn load(&self, m: &mut Machine, values: &[Word]) {
        m.memory_mut().load_region(&self.region, values);
    }

    pub fn dump(&self, m: &Machine) -> Vec<Word> {
        m.memory().dump_region(&self.region)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatherReport {
    pub stats: RunStats,
    /// Rows routed through `X`.
    pub routed: u64,
    pub direct: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransposeOptions {
    /// Use one `B_k × B_k` staging area; an in-place exchange then moves
    /// the data twice.
    pub single_staging: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransposeReport {
    pub stats: RunStats,
    pub gather: RunStats,
    pub transpose: RunStats,
    pub scatter: RunStats,
    /// References inside base exchanges.
    pub base_phases: RunStats,
    /// Staging-area references during the recursive transpose.
    pub staging: RunStats,
    pub routed: u64,
    pub direct: u64,
    pub tiles: u64,
}

/// Cache geometry used for routing decisions.
#[derive(Debug, Clone)]
struct Geometry {
    b1: u64,
    sets1: u64,
    bk: u64,
    last: usize,
    blocks: Vec<u64>,
}

impl Geometry {
    fn of(m: &Machine) -> Self {
        let spec = m.spec();
        let l1 = spec.level(0);
        Geometry {
            b1: l1.block,
            sets1: l1.set_count(),
            bk: spec.last().block,
            last: spec.depth() - 1,
            blocks: spec.levels().iter().map(|l| l.block).collect(),
        }
    }

    fn zone(&self, addr: u64) -> u64 {
        ((addr / self.b1) % self.sets1) / (self.bk / self.b1).max(1)
    }

    fn zones(&self, addr: u64, len: u64) -> Vec<u64> {
        let mut z: Vec<u64> = (addr / self.b1..=(addr + len - 1) / self.b1)
            .map(|line| self.zone(line * self.b1))
            .collect();
        z.dedup();
        z
    }
}

/// Scratch blocks kept resident at the last level.
struct Scratch<'a> {
    x: &'a Region,
    geo: Geometry,
    routed: u64,
    direct: u64,
}

impl Scratch<'_> {
    fn block(&self, t: u64) -> u64 {
        self.x.base.0 + t * self.geo.bk
    }

    fn restore(&self, m: &mut Machine) {
        for t in 0..4 {
            let a = self.block(t);
            if !m
                .cache()
                .is_resident(crate::memory::Address(a), self.geo.last)
            {
                m.touch(a);
            }
        }
    }

    /// Moves `len` words from `src` to `dst`.
    fn move_row(&mut self, m: &mut Machine, src: u64, dst: u64, len: u64) -> Result<(), AlgoError> {
        if len == 0 {
            return Ok(());
        }
        let zs = self.geo.zones(src, len);
        let zd = self.geo.zones(dst, len);
        if zs.iter().any(|z| zd.contains(z)) {
            let t = (0..4)
                .find(|&t| {
                    let z = self.geo.zone(self.block(t));
                    !zs.contains(&z) && !zd.contains(&z)
                })
                .ok_or_else(|| AlgoError::Argument("no free zone in X".into()))?;
            let x = self.block(t);
            for w in 0..len {
                m.mv(src + w, x + w);
            }
            for w in 0..len {
                m.mv(x + w, dst + w);
            }
            self.routed += 1;
        } else {
            for w in 0..len {
                m.mv(src + w, dst + w);
            }
            self.direct += 1;
        }
        self.restore(m);
        Ok(())
    }
}

fn check_scratch(m: &Machine, x: &Region) -> Result<Geometry, AlgoError> {
    let geo = Geometry::of(m);
    if x.length < 4 * geo.bk || !x.base.0.is_multiple_of(geo.bk) {
        return Err(AlgoError::Argument(format!(
            "scratch X must be {} words aligned to {}",
            4 * geo.bk,
            geo.bk
        )));
    }
    if geo.sets1 * geo.b1 < 4 * geo.bk {
        return Err(AlgoError::Argument(
            "first level too small for four zones".into(),
        ));
    }
    Ok(geo)
}

fn check_tile(src: &Matrix, row0: u64, col0: u64, size: u64) -> Result<(), AlgoError> {
    if row0 + size > src.rows || col0 + size > src.cols {
        return Err(AlgoError::Argument(format!(
            "{size}×{size} tile at ({row0}, {col0}) exceeds {}×{}",
            src.rows, src.cols
        )));
    }
    Ok(())
}

/// Copies the `size × size` tile at `(row0, col0)` of `src` into the
/// contiguous area at `staging`, rows concatenated.
pub fn gather_submatrix(
    m: &mut Machine,
    src: &Matrix,
    row0: u64,
    col0: u64,
    size: u64,
    staging: u64,
    x: &Region,
) -> Result<GatherReport, AlgoError> {
    check_tile(src, row0, col0, size)?;
    let geo = check_scratch(m, x)?;
    let start = m.stats().clone();
    let mut s = Scratch {
        x,
        geo,
        routed: 0,
        direct: 0,
    };
    s.restore(m);
    for r in 0..size {
        s.move_row(m, src.addr(row0 + r, col0), staging + r * size, size)?;
    }
    Ok(GatherReport {
        stats: diff(m.stats(), &start),
        routed: s.routed,
        direct: s.direct,
    })
}

/// Inverse of `gather_submatrix`.
pub fn scatter_submatrix(
    m: &mut Machine,
    staging: u64,
    dst: &Matrix,
    row0: u64,
    col0: u64,
    size: u64,
    x: &Region,
) -> Result<GatherReport, AlgoError> {
    check_tile(dst, row0, col0, size)?;
    let geo = check_scratch(m, x)?;
    let start = m.stats().clone();
    let mut s = Scratch {
        x,
        geo,
        routed: 0,
        direct: 0,
    };
    s.restore(m);
    for r in 0..size {
        s.move_row(m, staging + r * size, dst.addr(row0 + r, col0), size)?;
    }
    Ok(GatherReport {
        stats: diff(m.stats(), &start),
        routed: s.routed,
        direct: s.direct,
    })
}

/// Recursive in-place transpose of a contiguous `n × n` area (row stride
/// `n`). `sizes` lists the tile sizes from `n` down to `B₁`.
struct RecTrans<'a> {
    m: &'a mut Machine,
    stride: u64,
    sizes: &'a [u64],
    phase: RunStats,
}

impl RecTrans<'_> {
    /// Transposes the diagonal tile at `(o, o)` of size `sizes[lvl]`.
    fn diag(&mut self, base: u64, o: u64, lvl: usize) {
        let n = self.sizes[lvl];
        if lvl + 1 == self.sizes.len() {
            let before = self.m.stats().clone();
            self.m.cache_mut().begin_phase();
            for a in 0..n {
                for b in a + 1..n {
                    let p = base + (o + a) * self.stride + o + b;
                    let q = base + (o + b) * self.stride + o + a;
                    self.m.swap(p, q);
                }
            }
            self.m.cache_mut().end_phase();
            self.phase.merge(&diff(self.m.stats(), &before));
            return;
        }
        let s = self.sizes[lvl + 1];
        let t = n / s;
        for i in 0..t {
            self.diag(base, o + i * s, lvl + 1);
        }
        for i in 0..t {
            for j in i + 1..t {
                self.exchange(
                    base,
                    (o + i * s, o + j * s),
                    (o + j * s, o + i * s),
                    lvl + 1,
                );
            }
        }
    }

    /// Transposes tile `p` into tile `q`'s place and vice versa.
    fn exchange(&mut self, base: u64, p: (u64, u64), q: (u64, u64), lvl: usize) {
        let n = self.sizes[lvl];
        if lvl + 1 == self.sizes.len() {
            let before = self.m.stats().clone();
            self.m.cache_mut().begin_phase();
            for a in 0..n {
                for b in 0..n {
                    let x = base + (p.0 + a) * self.stride + p.1 + b;
                    let y = base + (q.0 + b) * self.stride + q.1 + a;
                    self.m.swap(x, y);
                }
            }
            self.m.cache_mut().end_phase();
            self.phase.merge(&diff(self.m.stats(), &before));
            return;
        }
        let s = self.sizes[lvl + 1];
        let t = n / s;
        for i in 0..t {
            for j in 0..t {
                self.exchange(
                    base,
                    (p.0 + i * s, p.1 + j * s),
                    (q.0 + j * s, q.1 + i * s),
                    lvl + 1,
                );
            }
        }
    }
}

fn rec_transpose(m: &mut Machine, base: u64, sizes: &[u64], phase: &mut RunStats) {
    let mut r = RecTrans {
        m,
        stride: sizes[0],
        sizes,
        phase: RunStats::new(phase.levels.len()),
    };
    r.diag(base, 0, 0);
    phase.merge(&r.phase);
}

/// Transposes `a` into `out`. `out` may be `a` itself when `a` is square;
/// any other overlap is rejected.
pub fn transpose_multilevel(
    m: &mut Machine,
    a: &Matrix,
    out: &Matrix,
    opts: TransposeOptions,
) -> Result<TransposeReport, AlgoError> {
    if out.rows != a.cols || out.cols != a.rows {
        return Err(AlgoError::Argument(
            "output shape must be the transpose".into(),
        ));
    }
    let in_place = out.region.base == a.region.base;
    if in_place && a.rows != a.cols {
        return Err(AlgoError::Argument(
            "in-place transpose needs a square matrix".into(),
        ));
    }
    let overlaps = out.region.base.0 < a.region.end() && a.region.base.0 < out.region.end();
    if overlaps && !in_place {
        return Err(AlgoError::Argument("output overlaps input".into()));
    }
    let geo = Geometry::of(m);
    let bk = geo.bk;
    let mut sizes = vec![bk];
    for &b in geo.blocks.iter().rev().skip(1) {
        sizes.push(b);
    }
    let depth = m.cache().depth();
    let start = m.stats().clone();
    let halves = if opts.single_staging { 1 } else { 2 };
    let mark = m.mark();
    let staging = m.alloc("staging", halves * bk * bk, bk)?;
    let x = m.alloc("X", 4 * bk, bk)?;
    let staging_watch = m.watch(&staging);
    let mut rep = TransposeReport {
        stats: RunStats::new(depth),
        gather: RunStats::new(depth),
        transpose: RunStats::new(depth),
        scatter: RunStats::new(depth),
        base_phases: RunStats::new(depth),
        staging: RunStats::new(depth),
        routed: 0,
        direct: 0,
        tiles: 0,
    };
    let (p, q) = (staging.base.0, staging.base.0 + bk * bk);
    let (tr, tc) = (a.rows / bk, a.cols / bk);

    let gather =
        |m: &mut Machine, rep: &mut TransposeReport, src: &Matrix, i: u64, j: u64, to: u64| {
            let g = gather_submatrix(m, src, i * bk, j * bk, bk, to, &x)?;
            rep.gather.merge(&g.stats);
            rep.routed += g.routed;
            rep.direct += g.direct;
            Ok::<(), AlgoError>(())
        };
    let scatter =
        |m: &mut Machine, rep: &mut TransposeReport, from: u64, dst: &Matrix, i: u64, j: u64| {
            let g = scatter_submatrix(m, from, dst, i * bk, j * bk, bk, &x)?;
            rep.scatter.merge(&g.stats);
            rep.routed += g.routed;
            rep.direct += g.direct;
            Ok::<(), AlgoError>(())
        };
    let transpose = |m: &mut Machine, rep: &mut TransposeReport, at: u64| {
        let before = m.stats().clone();
        let w_before = m.cache().watch_stats(staging_watch).clone();
        rec_transpose(m, at, &sizes, &mut rep.base_phases);
        rep.transpose.merge(&diff(m.stats(), &before));
        rep.staging
            .merge(&diff(m.cache().watch_stats(staging_watch), &w_before));
    };

    for i in 0..tr {
        for j in 0..tc {
            if in_place && j < i {
                continue;
            }
            if in_place && i != j {
                rep.tiles += 2;
                if opts.single_staging {
                    gather(m, &mut rep, a, i, j, p)?;
                    transpose(m, &mut rep, p);
                    // move A_ji into A_ij's place, then finish both tiles
                    for r in 0..bk {
                        let mut s = Scratch {
                            x: &x,
                            geo: geo.clone(),
                            routed: 0,
                            direct: 0,
                        };
                        s.move_row(
                            m,
                            a.addr(j * bk + r, i * bk),
                            a.addr(i * bk + r, j * bk),
                            bk,
                        )?;
                        rep.routed += s.routed;
                        rep.direct += s.direct;
                    }
                    scatter(m, &mut rep, p, out, j, i)?;
                    gather(m, &mut rep, a, i, j, p)?;
                    transpose(m, &mut rep, p);
                    scatter(m, &mut rep, p, out, i, j)?;
                } else {
                    gather(m, &mut rep, a, i, j, p)?;
                    gather(m, &mut rep, a, j, i, q)?;
                    transpose(m, &mut rep, p);
                    transpose(m, &mut rep, q);
                    scatter(m, &mut rep, p, out, j, i)?;
                    scatter(m, &mut rep, q, out, i, j)?;
                }
            } else {
                rep.tiles += 1;
                gather(m, &mut rep, a, i, j, p)?;
                transpose(m, &mut rep, p);
                scatter(m, &mut rep, p, out, j, i)?;
            }
        }
    }

    // ragged edges, element by element
    for r in 0..a.rows {
        let c0 = if r < tr * bk { tc * bk } else { 0 };
        for c in c0..a.cols {
            if in_place {
                if c > r {
                    m.swap(a.addr(r, c), a.addr(c, r));
                }
            } else {
                m.mv(a.addr(r, c), out.addr(c, r));
            }
        }
    }

    m.release(mark);
    rep.stats = diff(m.stats(), &start);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CacheLevelSpec, HierarchySpec};

    fn two_level() -> Machine {
        Machine::new(
            HierarchySpec::new(vec![
                CacheLevelSpec::direct_mapped(64 * 8, 8, 10).unwrap(),
                CacheLevelSpec::direct_mapped(256 * 32, 32, 100).unwrap(),
            ])
            .unwrap(),
        )
    }

    fn check(rows: u64, cols: u64, in_place: bool, opts: TransposeOptions) {
        let mut m = two_level();
        let vals: Vec<Word> = (0..rows * cols).map(|i| i * 3 + 1).collect();
        let a = Matrix::alloc(&mut m, "A", rows, cols, 32).unwrap();
        a.load(&mut m, &vals);
        let out = if in_place {
            a.clone()
        } else {
            Matrix::alloc(&mut m, "B", cols, rows, 32).unwrap()
        };
        transpose_multilevel(&mut m, &a, &out, opts).unwrap();
        let got = out.dump(&m);
        for r in 0..rows {
            for c in 0..cols {
                assert_eq!(
                    got[(c * rows + r) as usize],
                    vals[(r * cols + c) as usize],
                    "({r},{c})"
                );
            }
        }
    }

    #[test]
    fn transposes_square_and_rectangular() {
        check(64, 64, false, TransposeOptions::default());
        check(96, 64, false, TransposeOptions::default());
        check(64, 64, true, TransposeOptions::default());
        check(
            64,
            64,
            true,
            TransposeOptions {
                single_staging: true,
            },
        );
        check(45, 77, false, TransposeOptions::default());
        check(70, 70, true, TransposeOptions::default());
    }

    #[test]
    fn symmetric_two_by_two() {
        let mut m = two_level();
        let a = Matrix::alloc(&mut m, "A", 2, 2, 32).unwrap();
        a.load(&mut m, &[1, 0, 0, 1]);
        let b = Matrix::alloc(&mut m, "B", 2, 2, 32).unwrap();
        transpose_multilevel(&mut m, &a, &b, TransposeOptions::default()).unwrap();
        assert_eq!(b.dump(&m), vec![1, 0, 0, 1]);
    }

    #[test]
    fn overlapping_rectangular_is_rejected() {
        let mut m = two_level();
        let a = Matrix::alloc(&mut m, "A", 32, 64, 32).unwrap();
        let b = Matrix::new(a.region.clone(), 64, 32).unwrap();
        assert!(transpose_multilevel(&mut m, &a, &b, TransposeOptions::default()).is_err());
    }

    #[test]
    fn gather_routes_same_zone_rows() {
        let mut m = two_level();
        // row stride equal to the first-level span puts every row in one zone
        let src = Matrix::alloc(&mut m, "S", 32, 512, 512).unwrap();
        let staging = m.alloc("C", 32 * 32, 512).unwrap();
        let x = m.alloc("X", 128, 32).unwrap();
        let g = gather_submatrix(&mut m, &src, 0, 0, 32, staging.base.0, &x).unwrap();
        // staging rows cycle through the 16 zones; rows 0 and 16 collide
        assert_eq!((g.routed, g.direct), (2, 30));
        for (lvl, b) in [(0, 8u64), (1, 32)] {
            assert!(g.stats.levels[lvl].misses <= 3 * 32 * 32 / b + 4 * 32 / b);
        }
    }
}
