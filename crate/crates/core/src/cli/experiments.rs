//! Named experiment suites. Each returns a report whose checks decide the
//! exit status. Defaults reproduce the acceptance settings; `[params]`,
//! `--seed` and `--trials` override them.

use std::error::Error;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::config::Params;
use super::report::{Report, Row};
use crate::algorithms::{
    funnel_sort, mergesort_direct, mergesort_emulated, transpose_multilevel, FunnelOptions, Matrix,
    RunPlacement, TransposeOptions,
};
use crate::analysis::{
    conflict_bound_eval, conflict_experiment, cyclic_control, funnel_conflict_bound,
    funnel_miss_scale, monte_carlo_e1, monte_carlo_occupancy, occupancy_expect,
    occupancy_expect_exact, transpose_scan_bound, LevelParams,
};
use crate::cache::{CacheLevelSpec, HierarchySpec};
use crate::emulator::{emulate, EmulationOptions};
use crate::io::{mergesort_io, run_io, IoParams, IoProgram};
use crate::machine::Machine;
use crate::memory::Word;

pub type BoxError = Box<dyn Error + Send + Sync>;

pub const EXPERIMENTS: [&str; 6] = [
    "emulation-bound",
    "mergesort-conflict",
    "funnel-scaling",
    "transpose-cost",
    "occupancy",
    "conflict-bound",
];

#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub seed: u64,
    pub trials: Option<u64>,
    pub params: Params,
    pub hierarchy: Option<HierarchySpec>,
}

pub fn run_experiment(name: &str, ctx: &RunContext) -> Result<Report, BoxError> {
    let mut report = match name {
        "emulation-bound" => emulation_bound(ctx)?,
        "mergesort-conflict" => mergesort_conflict(ctx)?,
        "funnel-scaling" => funnel_scaling(ctx)?,
        "transpose-cost" => transpose_cost(ctx)?,
        "occupancy" => occupancy(ctx)?,
        "conflict-bound" => conflict_bound(ctx)?,
        other => {
            return Err(format!(
                "unknown experiment {other:?}; valid names: {}",
                EXPERIMENTS.join(", ")
            )
            .into())
        }
    };
    report.canonicalize();
    Ok(report)
}

/// A seeded permutation of `0..n`.
pub fn random_input(n: u64, seed: u64) -> Vec<Word> {
    let mut v: Vec<Word> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

fn is_sorted(v: &[Word]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

fn direct(memory: u64, block: u64, latency: u64) -> Result<HierarchySpec, BoxError> {
    Ok(HierarchySpec::single(CacheLevelSpec::direct_mapped(
        memory, block, latency,
    )?)?)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn emulation_bound(ctx: &RunContext) -> Result<Report, BoxError> {
    let p = &ctx.params;
    let n = p.n.unwrap_or(1 << 16);
    let memory = p.memory.unwrap_or(1 << 10);
    let block = p.block.unwrap_or(16);
    let latency = p.latency.unwrap_or(50);
    let seeds = ctx.trials.unwrap_or(10);
    let spec = direct(memory, block, latency)?;
    let mut report = Report::new(
        "emulation-bound",
        json!({"n": n, "memory": memory, "block": block, "latency": latency, "degree": p.degree,
               "seeds": seeds, "seed": ctx.seed}),
    );
    let rows = (0..seeds)
        .into_par_iter()
        .map(|t| -> Result<Row, BoxError> {
            let seed = ctx.seed.wrapping_add(t);
            let input = random_input(n, seed);
            let prog = mergesort_io(&input, IoParams::new(memory, block)?, p.degree)?;
            let init = prog.initial_slow();
            let (io_out, io) = run_io(&mut prog.clone(), init.clone())?;
            let (em_out, em) =
                emulate(&mut prog.clone(), &spec, &init, EmulationOptions::default())?;
            let bound = io.processing() + 4 * latency * io.transfers + 2 * block * io.transfers;
            Ok(Row::new("mergesort", seed)
                .with("transfers", io.transfers)
                .with("processing", io.processing())
                .with("total_cost", em.total_cost)
                .with("bound", bound)
                .with("ratio", em.total_cost as f64 / bound as f64)
                .with("safe_copies", em.safe_copies)
                .with("misses", em.misses)
                .with("outputs_equal", io_out == em_out)
                .with("sorted", is_sorted(&em_out[..n as usize])))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = rows
        .iter()
        .map(|r| {
            r.get("ratio")
                .and_then(|v| v.as_f64())
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max);
    report.check(
        "cost within I + 4LT + 2BT",
        worst <= 1.0,
        format!("worst ratio {worst:.4}"),
    );
    let equal = rows
        .iter()
        .all(|r| r.get("outputs_equal") == Some(&json!(true)));
    report.check(
        "emulated output equals run_io output",
        equal,
        format!("{} seeds", rows.len()),
    );
    report.rows = rows;
    Ok(report)
}

fn mergesort_conflict(ctx: &RunContext) -> Result<Report, BoxError> {
    let p = &ctx.params;
    let n = p.n.unwrap_or(1 << 18);
    let k = p.k.unwrap_or(128);
    let s = p.s.unwrap_or(128);
    let block = p.block.unwrap_or(8);
    let trials = ctx.trials.unwrap_or(10);
    let gap_memory = p.memory.unwrap_or(1 << 10);
    let gap_block = 16;
    let gap_latency = p.latency.unwrap_or(50);
    let mut report = Report::new(
        "mergesort-conflict",
        json!({"n": n, "k": k, "s": s, "block": block, "trials": trials, "seed": ctx.seed,
               "gap": {"memory": gap_memory, "block": gap_block, "latency": gap_latency, "degree": p.degree}}),
    );

    let rnd = conflict_experiment(
        n,
        k as usize,
        s,
        block,
        trials,
        ctx.seed,
        RunPlacement::Random,
    )?;
    for &(seed, f) in &rnd.trials {
        report.rows.push(
            Row::new("random", seed)
                .with("k", k)
                .with("s", s)
                .with("conflict_fraction", f),
        );
    }
    let delta = (1.0 - (-0.25 * k as f64 / s as f64).exp()) / 4.0;
    let floor = delta - 3.0 * rnd.mean.stderr;
    report.check(
        "random merge conflicts ≥ δ − 3·stderr",
        rnd.mean.estimate >= floor,
        format!(
            "mean {:.4} ± {:.4}, δ = {delta:.4}",
            rnd.mean.estimate, rnd.mean.stderr
        ),
    );

    let small = conflict_experiment(n, 2, 1024, block, trials, ctx.seed, RunPlacement::Random)?;
    for &(seed, f) in &small.trials {
        report.rows.push(
            Row::new("k2-s1024", seed)
                .with("k", 2)
                .with("s", 1024)
                .with("conflict_fraction", f),
        );
    }
    report.check(
        "k = 2, s = 1024 conflicts ≤ 0.02",
        small.mean.estimate <= 0.02,
        format!("mean {:.5}", small.mean.estimate),
    );

    let control = cyclic_control(n, k as usize, s, block)?;
    report.rows.push(
        Row::new("cyclic-control", ctx.seed)
            .with("k", k)
            .with("s", s)
            .with("conflict_fraction", control),
    );
    report.check(
        "cyclic control dominates random placement",
        control > rnd.mean.estimate,
        format!("control {control:.4} vs mean {:.4}", rnd.mean.estimate),
    );

    let input = random_input(n, ctx.seed);
    let mut m = Machine::new(direct(gap_memory, gap_block, gap_latency)?);
    let (d_out, d_stats) = mergesort_direct(&mut m, &input, gap_memory, p.degree)?;
    let (e_out, e_stats) = mergesort_emulated(&input, gap_memory, gap_block, gap_latency)?;
    let ratio = d_stats.levels[0].misses as f64 / e_stats.misses as f64;
    report.rows.push(
        Row::new("direct-vs-emulated", ctx.seed)
            .with("direct_misses", d_stats.levels[0].misses)
            .with("emulated_misses", e_stats.misses)
            .with("miss_ratio", ratio)
            .with("sorted", is_sorted(&d_out) && is_sorted(&e_out)),
    );
    let target = gap_block as f64 / 4.0;
    report.check(
        "direct / emulated misses ≥ B/4",
        ratio >= target,
        format!("ratio {ratio:.3} vs {target}"),
    );
    Ok(report)
}

fn funnel_scaling(ctx: &RunContext) -> Result<Report, BoxError> {
    let p = &ctx.params;
    let sizes = p
        .sizes
        .clone()
        .unwrap_or(vec![1 << 16, 1 << 17, 1 << 18, 1 << 19]);
    let memory = p.memory.unwrap_or(1 << 15);
    let block = p.block.unwrap_or(32);
    let latency = p.latency.unwrap_or(1);
    let seeds = ctx.trials.unwrap_or(10);
    let spec = direct(memory, block, latency)?;
    let lines = (memory / block) as f64;
    let mut report = Report::new(
        "funnel-scaling",
        json!({"sizes": sizes, "memory": memory, "block": block, "latency": latency, "seeds": seeds,
               "seed": ctx.seed}),
    );
    let jobs: Vec<(u64, u64)> = sizes
        .iter()
        .flat_map(|&n| (0..seeds).map(move |t| (n, t)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(n, t)| -> Result<Row, BoxError> {
            let seed = ctx.seed.wrapping_add(t);
            let input = random_input(n, seed);
            let mut m = Machine::new(spec.clone());
            let r = funnel_sort(
                &mut m,
                &input,
                FunnelOptions {
                    seed,
                    randomize: true,
                },
            )?;
            let scale = funnel_miss_scale(n as f64, memory as f64, block as f64)?;
            let misses = r.stats.levels[0].misses;
            Ok(Row::new("direct-mapped", seed)
                .with("n", n)
                .with("misses", misses)
                .with("scale", scale)
                .with("ratio", misses as f64 / scale)
                .with("top_charged", r.top_conflict_charged)
                .with("top_phase_remisses", r.top_phase.levels[0].phase_remisses)
                .with("top_merge_conflicts", r.top_merge.levels[0].conflict)
                .with("conflicts", r.stats.levels[0].conflict)
                .with("conflict_bound", funnel_conflict_bound(n as f64, lines))
                .with("sorted", is_sorted(&r.output)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let field = |r: &Row, f: &str| r.get(f).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
    let mut ratios = Vec::new();
    for &n in &sizes {
        let of_n: Vec<&Row> = rows.iter().filter(|r| field(r, "n") == n as f64).collect();
        ratios.push(mean(of_n.iter().map(|r| field(r, "ratio"))));
        let measured = mean(of_n.iter().map(|r| field(r, "top_charged")));
        let bound = 2.0 * funnel_conflict_bound(n as f64, lines);
        report.check(
            &format!("N = {n}: conflicts ≤ 2·(3N/m)·log₂(N^(1/3))"),
            measured <= bound,
            format!("mean {measured:.1} vs {bound:.1}"),
        );
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    let spread = hi / lo - 1.0;
    report.check(
        "miss ratio varies ≤ 25% across N",
        spread <= 0.25,
        format!("ratios {ratios:.3?}, spread {spread:.3}"),
    );
    report.check(
        "all outputs sorted",
        rows.iter().all(|r| r.get("sorted") == Some(&json!(true))),
        String::new(),
    );
    report.rows = rows;

    // 3-way: largest power-of-two set count that fits the capacity
    let mut sets = 1;
    while 3 * block * sets * 2 <= memory {
        sets *= 2;
    }
    let spec3 = HierarchySpec::single(CacheLevelSpec::new(3 * sets * block, block, 3, latency)?)?;
    let n = sizes[0];
    let mut m = Machine::new(spec3);
    let r = funnel_sort(
        &mut m,
        &random_input(n, ctx.seed),
        FunnelOptions {
            seed: ctx.seed,
            randomize: true,
        },
    )?;
    let remisses = r.phase_stats.levels[0].phase_remisses;
    report.rows.push(
        Row::new("3-way", ctx.seed)
            .with("n", n)
            .with("misses", r.stats.levels[0].misses)
            .with("phase_remisses", remisses)
            .with("sets", sets),
    );
    report.check(
        "3-way cache: no conflict misses inside 2-merger phases",
        remisses == 0,
        format!("{remisses} re-misses"),
    );
    Ok(report)
}

fn default_two_level() -> Result<HierarchySpec, BoxError> {
    Ok(HierarchySpec::new(vec![
        CacheLevelSpec::direct_mapped(64 * 8, 8, 10)?,
        CacheLevelSpec::direct_mapped(256 * 32, 32, 100)?,
    ])?)
}

/// Transposes a `rows × cols` matrix; returns the report and whether the
/// result matched element by element.
fn run_transpose(
    spec: &HierarchySpec,
    rows: u64,
    cols: u64,
    in_place: bool,
    opts: TransposeOptions,
) -> Result<(crate::algorithms::TransposeReport, bool), BoxError> {
    let mut m = Machine::new(spec.clone());
    let bk = spec.last().block;
    let vals: Vec<Word> = (0..rows * cols).map(|i| i * 7 + 3).collect();
    let a = Matrix::alloc(&mut m, "A", rows, cols, bk)?;
    a.load(&mut m, &vals);
    let out = if in_place {
        a.clone()
    } else {
        Matrix::alloc(&mut m, "B", cols, rows, bk)?
    };
    let rep = transpose_multilevel(&mut m, &a, &out, opts)?;
    let got = out.dump(&m);
    let ok = (0..rows)
        .all(|r| (0..cols).all(|c| got[(c * rows + r) as usize] == vals[(r * cols + c) as usize]));
    Ok((rep, ok))
}

fn transpose_cost(ctx: &RunContext) -> Result<Report, BoxError> {
    let n = ctx.params.n.unwrap_or(512);
    let spec = match &ctx.hierarchy {
        Some(h) => h.clone(),
        None => default_two_level()?,
    };
    let levels: Vec<LevelParams<f64>> = spec
        .levels()
        .iter()
        .map(|l| LevelParams::new(l.capacity as f64, l.block as f64, l.latency as f64))
        .collect();
    let scan = transpose_scan_bound(n as f64, &levels);
    let bound = 7.0 * scan + 4.0 * (n * n) as f64;
    let mut report = Report::new(
        "transpose-cost",
        json!({"n": n, "levels": spec.levels(), "seed": ctx.seed}),
    );
    let (sq, sq_ok) = run_transpose(&spec, n, n, false, TransposeOptions::default())?;
    let remisses: u64 = sq.base_phases.levels.iter().map(|l| l.phase_remisses).sum();
    let mut row = Row::new("square", ctx.seed)
        .with("rows", n)
        .with("cols", n)
        .with("cost", sq.stats.cost())
        .with("bound", bound)
        .with("ratio", sq.stats.cost() as f64 / bound)
        .with("routed_rows", sq.routed)
        .with("direct_rows", sq.direct)
        .with("phase_remisses", remisses)
        .with("correct", sq_ok);
    for (i, l) in sq.staging.levels.iter().enumerate() {
        row = row.with(&format!("staging_conflicts_l{}", i + 1), l.conflict);
    }
    report.rows.push(row);
    report.check(
        "cost ≤ 7·Σ N²/B_i·l_i + 4N²",
        sq.stats.cost() as f64 <= bound,
        format!("{} vs {bound}", sq.stats.cost()),
    );
    report.check(
        "no staging re-misses inside base exchanges",
        remisses == 0,
        format!("{remisses} re-misses"),
    );

    let (rect, rect_ok) = run_transpose(&spec, 96, 64, false, TransposeOptions::default())?;
    report.rows.push(
        Row::new("rectangular", ctx.seed)
            .with("rows", 96)
            .with("cols", 64)
            .with("cost", rect.stats.cost())
            .with("correct", rect_ok),
    );
    let mut in_place_ok = true;
    for single in [false, true] {
        let (r, ok) = run_transpose(
            &spec,
            n,
            n,
            true,
            TransposeOptions {
                single_staging: single,
            },
        )?;
        in_place_ok &= ok;
        report.rows.push(
            Row::new(
                if single {
                    "in-place-single-staging"
                } else {
                    "in-place"
                },
                ctx.seed,
            )
            .with("rows", n)
            .with("cols", n)
            .with("cost", r.stats.cost())
            .with("correct", ok),
        );
    }
    report.check(
        "output equals the transpose",
        sq_ok && rect_ok && in_place_ok,
        String::new(),
    );
    Ok(report)
}

fn occupancy(ctx: &RunContext) -> Result<Report, BoxError> {
    let trials = ctx.trials.unwrap_or(10_000);
    let ks: Vec<u64> = match ctx.params.k {
        Some(k) => vec![k],
        None => vec![16, 64, 256],
    };
    let mut report = Report::new(
        "occupancy",
        json!({"k": ks, "load": [0.5, 1.0, 2.0], "trials": trials, "seed": ctx.seed}),
    );
    let mut cell = 0;
    for &k in &ks {
        for m in [k / 2, k, 2 * k] {
            let seed = ctx.seed.wrapping_add(cell);
            cell += 1;
            let r = monte_carlo_occupancy(m, k, trials, seed);
            let approx = occupancy_expect(m as f64, k as f64);
            let exact = occupancy_expect_exact(m as f64, k as f64);
            let (za, ze) = (r.z_score(approx), r.z_score(exact));
            report.rows.push(
                Row::new("cell", seed)
                    .with("k", k)
                    .with("m", m)
                    .with("estimate", r.estimate)
                    .with("stderr", r.stderr)
                    .with("trials", r.trials)
                    .with("approx", approx)
                    .with("exact", exact)
                    .with("z_approx", za)
                    .with("z_exact", ze),
            );
            report.check(
                &format!("k = {k}, m = {m}: within 4·stderr of k(1 − e^(−m/k))"),
                za <= 4.0,
                format!("z = {za:.2}"),
            );
            report.check(
                &format!("k = {k}, m = {m}: within 4·stderr of k(1 − (1 − 1/k)^m)"),
                ze <= 4.0,
                format!("z = {ze:.2}"),
            );
        }
    }
    Ok(report)
}

fn conflict_bound(ctx: &RunContext) -> Result<Report, BoxError> {
    let trials = ctx.trials.unwrap_or(100_000);
    let block = ctx.params.block.unwrap_or(8);
    let k = ctx.params.k.unwrap_or(128);
    let s = ctx.params.s.unwrap_or(128);
    let mut report = Report::new(
        "conflict-bound",
        json!({"k": k, "s": s, "block": block, "trials": trials, "seed": ctx.seed}),
    );
    for gk in [128u64, 256, 1024] {
        for gs in [32u64, 128, 1024] {
            let row = Row::new("eval", ctx.seed).with("k", gk).with("s", gs);
            match conflict_bound_eval::<f64>(gk, gs, None) {
                Ok(b) => report.rows.push(
                    row.with("sum", b.sum)
                        .with("cap", b.cap)
                        .with("delta", b.delta)
                        .with("tail", b.tail),
                ),
                Err(e) => {
                    report.check(
                        &format!("k = {gk}, s = {gs}: sum ≤ cap"),
                        false,
                        e.to_string(),
                    );
                    report.rows.push(row);
                }
            }
        }
    }
    let b = conflict_bound_eval::<f64>(k, s, None)?;
    let cap = b.cap.ok_or("cap needs k > 100")?;
    report.check(
        "truncated sum ≤ 0.75 + 0.25·e^(−0.25k/s) + 1e-6",
        b.sum <= cap + 1e-6,
        format!("{:.6} vs {cap:.6}", b.sum),
    );
    let mc = monte_carlo_e1(k, s, block, trials, ctx.seed);
    report.rows.push(
        Row::new("monte-carlo-e1", ctx.seed)
            .with("k", k)
            .with("s", s)
            .with("block", block)
            .with("estimate", mc.estimate)
            .with("stderr", mc.stderr)
            .with("trials", mc.trials)
            .with("cap", cap),
    );
    report.check(
        "Monte Carlo Pr[E1] ≤ cap + 3·stderr",
        mc.estimate <= cap + 3.0 * mc.stderr,
        format!("{:.4} ± {:.4} vs {cap:.4}", mc.estimate, mc.stderr),
    );
    Ok(report)
}
