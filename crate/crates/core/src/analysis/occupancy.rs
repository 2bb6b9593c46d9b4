use num_traits::Float;
use rand::Rng;

use super::{par_trials, McResult};

/// `k·(1 − e^{−m/k})`: expected non-empty bins, `m` balls into `k` bins.
pub fn occupancy_expect<F: Float>(m: F, k: F) -> F {
    k * (F::one() - (-m / k).exp())
}

/// `k·(1 − (1 − 1/k)^m)`.
pub fn occupancy_expect_exact<F: Float>(m: F, k: F) -> F {
    k * (F::one() - (F::one() - F::one() / k).powf(m))
}

/// Estimates the expected number of non-empty bins.
pub fn monte_carlo_occupancy(m: u64, k: u64, trials: u64, seed: u64) -> McResult {
    assert!(k >= 1 && trials >= 1);
    let samples = par_trials(trials, seed, |rng| {
        let mut hit = vec![false; k as usize];
        let mut nz = 0u64;
        for _ in 0..m {
            let b = rng.gen_range(0..k) as usize;
            if !hit[b] {
                hit[b] = true;
                nz += 1;
            }
        }
        nz as f64
    });
    McResult::from_samples(&samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(occupancy_expect(0.0, 64.0), 0.0);
        assert!((occupancy_expect(64.0f64, 64.0) - 40.45571).abs() < 1e-4);
        assert!((occupancy_expect(1e6f64, 64.0) - 64.0).abs() < 1e-9);
        assert_eq!(occupancy_expect_exact(5.0, 1.0), 1.0);
        // k(1 − (1 − 1/k)^m) for k = 4, m = 2: 4·(1 − 9/16)
        assert!((occupancy_expect_exact(2.0f64, 4.0) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo() {
        let r = monte_carlo_occupancy(64, 64, 10_000, 3);
        assert!(r.z_score(occupancy_expect_exact(64.0, 64.0)) < 4.0, "{r:?}");
        let zero = monte_carlo_occupancy(0, 64, 200, 3);
        assert_eq!((zero.estimate, zero.stderr), (0.0, 0.0));
        let one = monte_carlo_occupancy(10, 1, 200, 3);
        assert_eq!((one.estimate, one.stderr), (1.0, 0.0));
        assert_eq!(
            monte_carlo_occupancy(64, 64, 3000, 9),
            monte_carlo_occupancy(64, 64, 3000, 9)
        );
    }
}
