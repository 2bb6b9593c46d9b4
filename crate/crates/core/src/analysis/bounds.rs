use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// One cache level: capacity `M_i`, block `B_i`, latency `l_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelParams<F> {
    pub memory: F,
    pub block: F,
    pub latency: F,
}

impl<F: Float> LevelParams<F> {
    pub fn new(memory: F, block: F, latency: F) -> Self {
        LevelParams {
            memory,
            block,
            latency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs<F> {
    pub n: F,
    pub levels: Vec<LevelParams<F>>,
}

impl<F: Float> BoundInputs<F> {
    pub fn new(n: F, levels: Vec<LevelParams<F>>) -> Self {
        BoundInputs { n, levels }
    }

    /// `C_i = M_1 + … + M_i`.
    pub fn cumulative(&self) -> Vec<F> {
        self.levels
            .iter()
            .scan(F::zero(), |acc, l| {
                *acc = *acc + l.memory;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortBoundVariant {
    /// No transfers across non-adjacent levels.
    Restricted,
    /// Each level's term minus the terms of all higher levels.
    General,
    /// Halved restricted sum; needs `C_i/C_{i−1} ≥ B_i/B_{i−1} ≥ 3`.
    Geometric,
}

fn lit<F: Float>(x: f64) -> F {
    F::from(x).unwrap()
}

fn transfer_term<F: Float>(n: F, capacity: F, block: F) -> Result<F, AnalysisError> {
    if n <= block || capacity <= block || block < F::one() {
        return Err(AnalysisError::Degenerate(
            "need N > B ≥ 1 and M > B for the logarithms".into(),
        ));
    }
    Ok(n / block * (n / block).ln() / (capacity / block).ln())
}

/// `N·log₂N + L·(N/B)·log(N/B)/log(M/B)`.
pub fn sort_lower_bound_single<F: Float>(
    n: F,
    memory: F,
    block: F,
    latency: F,
) -> Result<F, AnalysisError> {
    Ok(n * n.log2() + latency * transfer_term(n, memory, block)?)
}

pub fn sort_lower_bound_multilevel<F: Float>(
    inputs: &BoundInputs<F>,
    variant: SortBoundVariant,
) -> Result<F, AnalysisError> {
    let n = inputs.n;
    if inputs.levels.is_empty() {
        return Err(AnalysisError::Precondition("no cache levels".into()));
    }
    let c = inputs.cumulative();
    let terms = inputs
        .levels
        .iter()
        .zip(&c)
        .map(|(l, &ci)| transfer_term(n, ci, l.block))
        .collect::<Result<Vec<F>, _>>()?;
    let base = n * n.log2();
    let weighted = |t: &[F]| {
        inputs
            .levels
            .iter()
            .zip(t)
            .fold(F::zero(), |acc, (l, &x)| acc + l.latency * x)
    };
    match variant {
        SortBoundVariant::Restricted => Ok(base + weighted(&terms)),
        SortBoundVariant::General => {
            let mut net = terms.clone();
            let mut above = F::zero();
            for i in (0..terms.len()).rev() {
                net[i] = terms[i] - above;
                above = above + terms[i];
            }
            Ok(base + weighted(&net))
        }
        SortBoundVariant::Geometric => {
            let three = lit::<F>(3.0);
            for i in 1..inputs.levels.len() {
                let cr = c[i] / c[i - 1];
                let br = inputs.levels[i].block / inputs.levels[i - 1].block;
                if !(cr >= br && br >= three) {
                    return Err(AnalysisError::Precondition(format!(
                        "level {}: C ratio {} and B ratio {} violate C_i/C_(i-1) ≥ B_i/B_(i-1) ≥ 3",
                        i + 1,
                        cr.to_f64().unwrap_or(f64::NAN),
                        br.to_f64().unwrap_or(f64::NAN)
                    )));
                }
            }
            Ok(base + lit::<F>(0.5) * weighted(&terms))
        }
    }
}

/// `Σ_i (N²/B_i)·l_i` for an `N × N` matrix.
pub fn transpose_scan_bound<F: Float>(n: F, levels: &[LevelParams<F>]) -> F {
    levels
        .iter()
        .fold(F::zero(), |acc, l| acc + n * n / l.block * l.latency)
}

/// `I + 4·L·T + 2·B·T`.
pub fn emulation_cost_bound<F: Float>(processing: F, transfers: F, latency: F, block: F) -> F {
    processing + lit::<F>(4.0) * latency * transfers + lit::<F>(2.0) * block * transfers
}

/// Per-element, per-2-merger collision cap `3/m`.
pub fn funnel_conflict_expect<F: Float>(lines: F) -> F {
    lit::<F>(3.0) / lines
}

/// `(3N/m)·log₂(N^{1/3})`.
pub fn funnel_conflict_bound<F: Float>(n: F, lines: F) -> F {
    n * funnel_conflict_expect(lines) * n.cbrt().log2()
}

/// `(N/B)·log(N/B)/log(M/B)`.
pub fn funnel_miss_scale<F: Float>(n: F, memory: F, block: F) -> Result<F, AnalysisError> {
    transfer_term(n, memory, block)
}
