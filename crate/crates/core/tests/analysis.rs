use cachelab::analysis::{
    conflict_bound_eval, monte_carlo_occupancy, occupancy_expect_exact,
    sort_lower_bound_multilevel, sort_lower_bound_single, SortBoundVariant,
};
use cachelab::{BoundInputs32, BoundInputs64, LevelParams32, LevelParams64};

/// Expected non-empty bins by dynamic programming over the bin-count
/// distribution, ball by ball.
fn occupancy_dp(m: usize, k: usize) -> f64 {
    let mut p = vec![0.0f64; k + 1];
    p[0] = 1.0;
    for _ in 0..m {
        let mut q = vec![0.0f64; k + 1];
        for j in 0..=k {
            if p[j] == 0.0 {
                continue;
            }
            q[j] += p[j] * j as f64 / k as f64;
            if j < k {
                q[j + 1] += p[j] * (k - j) as f64 / k as f64;
            }
        }
        p = q;
    }
    p.iter().enumerate().map(|(j, x)| j as f64 * x).sum()
}

#[test]
fn exact_occupancy_matches_dynamic_program() {
    for (m, k) in [(1, 1), (5, 3), (8, 16), (64, 64), (300, 50)] {
        let dp = occupancy_dp(m, k);
        let f = occupancy_expect_exact(m as f64, k as f64);
        assert!((dp - f).abs() < 1e-9, "m = {m}, k = {k}: {dp} vs {f}");
    }
}

#[test]
fn monte_carlo_occupancy_is_seed_deterministic() {
    let a = monte_carlo_occupancy(64, 64, 3000, 5);
    let b = monte_carlo_occupancy(64, 64, 3000, 5);
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.stderr, b.stderr);
    assert!(a.z_score(occupancy_expect_exact(64.0, 64.0)) < 5.0);
}

fn levels64() -> Vec<LevelParams64> {
    vec![
        LevelParams64::new(1024.0, 16.0, 10.0),
        LevelParams64::new(65536.0, 64.0, 100.0),
        LevelParams64::new(4194304.0, 256.0, 1000.0),
    ]
}

#[test]
fn f32_and_f64_bounds_agree() {
    let l32: Vec<LevelParams32> = levels64()
        .iter()
        .map(|l| LevelParams32::new(l.memory as f32, l.block as f32, l.latency as f32))
        .collect();
    for n in [1e6f64, 1e8] {
        let b64 = BoundInputs64::new(n, levels64());
        let b32 = BoundInputs32::new(n as f32, l32.clone());
        for v in [
            SortBoundVariant::Restricted,
            SortBoundVariant::General,
            SortBoundVariant::Geometric,
        ] {
            let x = sort_lower_bound_multilevel(&b64, v).unwrap();
            let y = sort_lower_bound_multilevel(&b32, v).unwrap() as f64;
            assert!((x - y).abs() / x < 1e-5, "{v:?}: {x} vs {y}");
        }
    }
    let x = conflict_bound_eval::<f64>(128, 128, None).unwrap();
    let y = conflict_bound_eval::<f32>(128, 128, None).unwrap();
    assert!((x.sum - y.sum as f64).abs() < 1e-4);
}

#[test]
fn one_level_variants_reduce_to_single_bound() {
    let l = LevelParams64::new(1024.0, 16.0, 50.0);
    let single = sort_lower_bound_single(1e6, l.memory, l.block, l.latency).unwrap();
    let inputs = BoundInputs64::new(1e6, vec![l]);
    for v in [SortBoundVariant::Restricted, SortBoundVariant::General] {
        let x = sort_lower_bound_multilevel(&inputs, v).unwrap();
        assert!((x - single).abs() / single < 1e-12);
    }
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(sort_lower_bound_single(8.0, 1024.0, 16.0, 1.0).is_err());
    assert!(sort_lower_bound_single(1e6, 16.0, 16.0, 1.0).is_err());
}
