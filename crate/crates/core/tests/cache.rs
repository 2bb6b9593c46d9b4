mod common;

use cachelab::cache::{format_trace, parse_trace, run_trace, CacheLevelSpec, HierarchySpec};
use cachelab::memory::{AccessKind, Address, MemEvent};
use cachelab::Hierarchy;
use common::{random_trace, Oracle};
use proptest::prelude::*;

fn reads(addrs: &[u64]) -> Vec<MemEvent> {
    addrs
        .iter()
        .map(|&a| MemEvent {
            kind: AccessKind::Read,
            addr: Address(a),
        })
        .collect()
}

fn check_against_oracle(spec: &HierarchySpec, addrs: &[u64]) {
    let stats = run_trace(spec, reads(addrs));
    let mut o = Oracle::new(spec);
    for &a in addrs {
        o.access(a);
    }
    assert_eq!(stats.references, o.references);
    assert_eq!(stats.latency, o.latency);
    for (i, (l, c)) in stats.levels.iter().zip(&o.counts).enumerate() {
        let got = [
            l.accesses,
            l.hits,
            l.misses,
            l.compulsory,
            l.capacity,
            l.conflict,
            l.fa_misses,
            l.fa_only_misses,
        ];
        let want = [
            c.accesses,
            c.hits,
            c.misses,
            c.compulsory,
            c.capacity,
            c.conflict,
            c.fa_misses,
            c.fa_only_misses,
        ];
        assert_eq!(got, want, "level {i}");
    }
}

/// One to three levels with doubling blocks and growing capacity; specs
/// that break the multi-level assumptions are skipped.
fn arb_spec() -> impl Strategy<Value = HierarchySpec> {
    (1usize..=3, 0u32..=2, 0u32..=2, 1u32..=4).prop_filter_map(
        "multi-level assumptions",
        |(depth, b0, a0, s0)| {
            let mut levels = Vec::new();
            let (mut block, mut sets) = (1u64 << (b0 + 1), 1u64 << s0);
            let mut assoc = 1u64 << a0;
            for i in 0..depth {
                levels.push(
                    CacheLevelSpec::new(sets * assoc * block, block, assoc, 10 * (i as u64 + 1))
                        .ok()?,
                );
                block *= 2;
                sets *= 2;
                assoc = (assoc * 2).min(8);
            }
            HierarchySpec::new(levels).ok()
        },
    )
}

proptest! {
    #[test]
    fn matches_brute_force_lru(spec in arb_spec(), addrs in prop::collection::vec(0u64..2048, 0..400)) {
        check_against_oracle(&spec, &addrs);
    }

    #[test]
    fn classes_partition_misses(spec in arb_spec(), addrs in prop::collection::vec(0u64..2048, 0..400)) {
        let s = run_trace(&spec, reads(&addrs));
        for l in &s.levels {
            prop_assert_eq!(l.compulsory + l.capacity + l.conflict, l.misses);
            prop_assert_eq!(l.hits + l.misses, l.accesses);
            prop_assert_eq!(l.conflict as i64 - l.fa_only_misses as i64,
                            l.misses as i64 - l.fa_misses as i64);
        }
        prop_assert_eq!(s.levels[0].accesses, addrs.len() as u64);
    }

    #[test]
    fn inclusion_is_maintained(spec in arb_spec(), addrs in prop::collection::vec(0u64..2048, 0..300)) {
        let mut h = Hierarchy::new(spec);
        for &a in &addrs {
            h.access(Address(a), AccessKind::Write, 1);
        }
        prop_assert!(h.inclusion_holds((0..2048).map(Address)));
    }

    #[test]
    fn trace_text_round_trips(addrs in prop::collection::vec(0u64..1_000_000, 0..50)) {
        let ev = reads(&addrs);
        prop_assert_eq!(parse_trace(&format_trace(&ev)).unwrap(), ev);
    }
}

#[test]
fn long_traces_match_oracle() {
    let spec = HierarchySpec::new(vec![
        CacheLevelSpec::new(256, 8, 2, 10).unwrap(),
        CacheLevelSpec::new(2048, 32, 4, 100).unwrap(),
    ])
    .unwrap();
    check_against_oracle(&spec, &random_trace(20_000, 2048, 8, 3));
}

#[test]
fn fully_associative_has_no_conflicts() {
    let spec =
        HierarchySpec::single(CacheLevelSpec::fully_associative(512, 16, 10).unwrap()).unwrap();
    let s = run_trace(&spec, reads(&random_trace(20_000, 512, 16, 9)));
    assert_eq!(s.levels[0].conflict, 0);
    assert_eq!(s.levels[0].fa_only_misses, 0);
    assert_eq!(s.levels[0].misses, s.levels[0].fa_misses);
}

#[test]
fn sa_can_hit_where_fa_misses() {
    // two sets, one way each, against a two-line FA cache
    let spec = HierarchySpec::single(CacheLevelSpec::direct_mapped(2, 1, 1).unwrap()).unwrap();
    let s = run_trace(&spec, reads(&[0, 1, 3, 0]));
    let l = &s.levels[0];
    assert_eq!((l.misses, l.fa_misses), (3, 4));
    assert_eq!(l.fa_only_misses, 1);
    assert_eq!(l.conflict, 0);
}
