use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{par_trials, AnalysisError, McResult};
use crate::algorithms::{kway_merge_direct, place_runs, AlgoError, HeapPolicy, RunPlacement};
use crate::cache::{CacheLevelSpec, HierarchySpec};
use crate::machine::Machine;
use crate::memory::Word;

/// Sorted runs partitioning `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeInstance {
    pub runs: Vec<Vec<Word>>,
    pub seed: u64,
}

impl MergeInstance {
    pub fn len(&self) -> u64 {
        self.runs.iter().map(|r| r.len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lens(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.len() as u64).collect()
    }
}

/// Walks `1..=n` in order and appends each value to a uniformly chosen run.
pub fn random_merge_instance(n: u64, k: usize, seed: u64) -> Result<MergeInstance, AnalysisError> {
    if k < 2 {
        return Err(AnalysisError::Precondition(format!("k = {k} < 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = vec![Vec::with_capacity((n as usize / k) + 1); k];
    for v in 1..=n {
        runs[rng.gen_range(0..k)].push(v);
    }
    Ok(MergeInstance { runs, seed })
}

/// Value `v` goes to run `(v − 1) mod k`, so all runs advance in lockstep.
pub fn round_robin_instance(n: u64, k: usize) -> Result<MergeInstance, AnalysisError> {
    if k < 2 {
        return Err(AnalysisError::Precondition(format!("k = {k} < 2")));
    }
    let mut runs = vec![Vec::with_capacity((n as usize / k) + 1); k];
    for v in 1..=n {
        runs[((v - 1) % k as u64) as usize].push(v);
    }
    Ok(MergeInstance { runs, seed: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictBound<F> {
    /// Truncated upper-bound sum for `Pr[E1]`.
    pub sum: F,
    /// `0.75 + 0.25·e^{−0.25k/s}`, defined for `k > 100`.
    pub cap: Option<F>,
    /// `1 − cap`.
    pub delta: Option<F>,
    /// Probability mass of the dropped geometric tail.
    pub tail: F,
}

const TAIL_LIMIT: f64 = 1e-9;
const CAP_SLACK: f64 = 1e-6;

/// Evaluates `Σ_m (1/k)(1−1/k)^m · E[(1−1/s)^{NZ(m,k−1)}]` for `m ≤ m_max`
/// (default `50k`). The expectation is replaced by its concentration bound
/// with `α = 2`, natural log and the exact `E[NZ]`, clamped to `[0, 1]`.
pub fn conflict_bound_eval<F: Float>(
    k: u64,
    s: u64,
    m_max: Option<u64>,
) -> Result<ConflictBound<F>, AnalysisError> {
    if k < 3 || s < 1 {
        return Err(AnalysisError::Precondition(format!(
            "need k ≥ 3 and s ≥ 1, got k = {k}, s = {s}"
        )));
    }
    let m_max = m_max.unwrap_or(50 * k);
    let c = |x: f64| F::from(x).unwrap();
    let kf = c(k as f64);
    let one = F::one();
    let q = one - one / kf;
    let tail = q.powf(c(m_max as f64 + 1.0));
    if tail.to_f64().unwrap_or(1.0) >= TAIL_LIMIT {
        return Err(AnalysisError::Precondition(format!(
            "m_max = {m_max} leaves a tail of {:e}",
            tail.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let alpha = c(2.0);
    let keep = one - one / c(s as f64);
    let dev = alpha * (c(2.0) * kf * kf.ln()).sqrt();
    let floor = keep / kf.powf(alpha);
    let bins = kf - one;
    let stay = one - one / bins;
    let mut weight = one / kf;
    let mut empty = one;
    let mut sum = weight;
    for _ in 1..=m_max {
        weight = weight * q;
        empty = empty * stay;
        let nz = bins * (one - empty);
        let e = (floor + keep.powf((nz - dev).max(F::zero()))).min(one);
        sum = sum + weight * e;
    }
    let cap = (k > 100).then(|| c(0.75) + c(0.25) * (c(-0.25) * kf / c(s as f64)).exp());
    if let Some(cap) = cap {
        if sum > cap + c(CAP_SLACK) {
            return Err(AnalysisError::Degenerate(format!(
                "truncated sum {} exceeds cap {}",
                sum.to_f64().unwrap_or(f64::NAN),
                cap.to_f64().unwrap_or(f64::NAN)
            )));
        }
    }
    Ok(ConflictBound {
        sum,
        cap,
        delta: cap.map(|x| one - x),
        tail,
    })
}

/// Estimates `Pr[E1]`: between two consecutive elements of one run, none of
/// the other runs' leading blocks passes through that run's cache set.
/// Gap length is geometric with parameter `1/k`, the gap's elements go to
/// the other `k − 1` runs uniformly, and each leading block starts at a
/// uniform set and a uniform offset within its block.
pub fn monte_carlo_e1(k: u64, s: u64, block: u64, trials: u64, seed: u64) -> McResult {
    assert!(k >= 2 && s >= 1 && block >= 1 && trials >= 1);
    let samples = par_trials(trials, seed, |rng| {
        let mut gap = 0u64;
        while rng.gen_range(0..k) != 0 {
            gap += 1;
        }
        let mut counts = vec![0u64; (k - 1) as usize];
        for _ in 0..gap {
            counts[rng.gen_range(0..k - 1) as usize] += 1;
        }
        // the watched run's leading block sits in set 0
        let clear = counts.iter().filter(|&&c| c > 0).all(|&c| {
            let set = rng.gen_range(0..s);
            let offset = rng.gen_range(0..block);
            let visited = (offset + c - 1) / block + 1;
            visited < s && (s - set) % s >= visited
        });
        if clear {
            1.0
        } else {
            0.0
        }
    });
    McResult::from_samples(&samples, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictExperiment {
    /// `(trial seed, conflict misses / N)`.
    pub trials: Vec<(u64, f64)>,
    pub mean: McResult,
}

fn merge_conflict_fraction(
    spec: &HierarchySpec,
    inst: &MergeInstance,
    placement: RunPlacement,
    rng: &mut ChaCha8Rng,
) -> Result<f64, AnalysisError> {
    let mut m = Machine::new(spec.clone());
    let regions = place_runs(&mut m, &inst.runs, placement, rng)?;
    let out = kway_merge_direct(&mut m, &regions, &inst.lens(), HeapPolicy::Registers, None)?;
    Ok(out.run_stats.levels[0].conflict as f64 / inst.len().max(1) as f64)
}

fn merge_spec(s: u64, block: u64) -> Result<HierarchySpec, AnalysisError> {
    let level = CacheLevelSpec::direct_mapped(s * block, block, 1).map_err(AlgoError::from)?;
    Ok(HierarchySpec::single(level).map_err(AlgoError::from)?)
}

/// Non-random control: a round-robin instance with every run starting at
/// set 0, so all leading blocks share one set.
pub fn cyclic_control(n: u64, k: usize, s: u64, block: u64) -> Result<f64, AnalysisError> {
    let inst = round_robin_instance(n, k)?;
    merge_conflict_fraction(
        &merge_spec(s, block)?,
        &inst,
        RunPlacement::Cyclic,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
}

/// Merges random instances on a direct-mapped cache of `s` sets of `block`
/// words with the heap outside the cache. Trial `t` uses seed `seed + t` for
/// both the instance and the run placement.
pub fn conflict_experiment(
    n: u64,
    k: usize,
    s: u64,
    block: u64,
    trials: u64,
    seed: u64,
    placement: RunPlacement,
) -> Result<ConflictExperiment, AnalysisError> {
    let spec = merge_spec(s, block)?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ts = seed.wrapping_add(t);
            let inst = random_merge_instance(n, k, ts)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ts);
            rng.set_stream(1);
            Ok((
                ts,
                merge_conflict_fraction(&spec, &inst, placement, &mut rng)?,
            ))
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let fr: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ConflictExperiment {
        mean: McResult::from_samples(&fr, seed),
        trials: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_partitions() {
        let i = random_merge_instance(4, 2, 11).unwrap();
        let mut all: Vec<Word> = i.runs.concat();
        all.sort_unstable();
        assert_eq!(all, vec![1, 2, 3, 4]);
        for r in &i.runs {
            assert!(r.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(random_merge_instance(4, 1, 0).is_err());
    }

    #[test]
    fn run_length_mean() {
        let (n, k) = (4096u64, 8usize);
        let lens: Vec<f64> = (0..100)
            .map(|s| random_merge_instance(n, k, s).unwrap().runs[0].len() as f64)
            .collect();
        let r = McResult::from_samples(&lens, 0);
        assert!(r.z_score(n as f64 / k as f64) < 3.0, "{r:?}");
    }

    #[test]
    fn bound_examples() {
        let b = conflict_bound_eval::<f64>(128, 128, None).unwrap();
        let cap = b.cap.unwrap();
        assert!((cap - 0.944700).abs() < 1e-6);
        assert!((b.delta.unwrap() - 0.055300).abs() < 1e-6);
        assert!(b.sum <= cap);
        let b32 = conflict_bound_eval::<f64>(128, 32, None).unwrap();
        assert!((b32.cap.unwrap() - 0.841970).abs() < 1e-6);
        let wide = conflict_bound_eval::<f64>(128, 1 << 40, None).unwrap();
        assert!(wide.sum > 0.999_999 && wide.delta.unwrap() < 1e-9);
        assert!(conflict_bound_eval::<f64>(50, 32, None)
            .unwrap()
            .cap
            .is_none());
        assert!(conflict_bound_eval::<f64>(128, 128, Some(100)).is_err());
        let single = conflict_bound_eval::<f32>(128, 128, None).unwrap();
        assert!((single.sum as f64 - b.sum).abs() < 1e-4);
    }

    #[test]
    fn bound_monotone_in_load() {
        let mut prev: Option<ConflictBound<f64>> = None;
        for s in [4096, 1024, 512, 256, 128, 64, 32, 16] {
            let b = conflict_bound_eval::<f64>(128, s, None).unwrap();
            if let Some(p) = prev {
                assert!(b.sum <= p.sum && b.delta.unwrap() >= p.delta.unwrap());
            }
            prev = Some(b);
        }
    }

    #[test]
    fn e1_matches_closed_form_for_one_other_run() {
        // k = 2: gap m ~ Geom(1/2), all to the other run; avoid prob
        // 1 − (m − 1 + B)/(sB) for m ≥ 1
        let (s, b) = (64u64, 4u64);
        let mut exact = 0.5;
        for m in 1..2000u64 {
            let p = 0.5f64.powi(m as i32 + 1);
            exact += p * (1.0 - (m - 1 + b) as f64 / (s * b) as f64).max(0.0);
        }
        let r = monte_carlo_e1(2, s, b, 40_000, 5);
        assert!(r.z_score(exact) < 4.0, "{r:?} vs {exact}");
    }

    #[test]
    fn experiment_regimes() {
        let rnd = conflict_experiment(1 << 14, 2, 1024, 8, 3, 1, RunPlacement::Random).unwrap();
        assert!(rnd.mean.estimate <= 0.02);
        let cyc = cyclic_control(1 << 14, 16, 64, 16).unwrap();
        // every access but the first to each block conflicts: 1 − 1/B
        assert_eq!(cyc, 1.0 - 1.0 / 16.0);
        let r16 = conflict_experiment(1 << 14, 16, 64, 16, 2, 1, RunPlacement::Random).unwrap();
        assert!(cyc > r16.mean.estimate);
        assert!(r16.trials.iter().all(|t| t.1 <= 1.0));
        assert_eq!(
            rnd.trials.iter().map(|t| t.0).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }
}
