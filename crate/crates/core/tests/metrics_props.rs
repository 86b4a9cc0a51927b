use cgmvc_core::metrics::{self, MetricsReport};
use cgmvc_core::oracle;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every labeling of `n` points with at most `c` clusters, up to renaming.
fn partitions(n: usize, c: usize) -> Vec<Vec<usize>> {
    fn rec(a: &mut Vec<usize>, n: usize, c: usize, out: &mut Vec<Vec<usize>>) {
        if a.len() == n {
            out.push(a.clone());
            return;
        }
        let used = a.iter().max().map_or(0, |m| m + 1);
        for g in 0..=used.min(c - 1) {
            a.push(g);
            rec(a, n, c, out);
            a.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, c, &mut out);
    out
}

#[test]
fn partition_enumeration_counts() {
    // Stirling numbers: S(7,1) + S(7,2) + S(7,3)
    assert_eq!(partitions(7, 3).len(), 1 + 63 + 301);
}

#[test]
fn exhaustive_small_labelings_match_oracles() {
    for n in 1..=7 {
        let all = partitions(n, 3);
        for p in &all {
            for t in &all {
                let acc = metrics::accuracy(p, t).unwrap();
                assert_eq!(acc, oracle::brute_force_accuracy(p, t), "{p:?} {t:?}");
                let ari = metrics::ari(p, t).unwrap();
                let ari_o = oracle::pair_ari(p, t);
                assert!(ari == ari_o, "{p:?} {t:?}: {ari} vs {ari_o}");
                let prf = metrics::pairwise_prf(p, t).unwrap();
                let (pr, re, f1) = oracle::pair_prf(p, t);
                assert_eq!((prf.precision, prf.recall), (pr, re), "{p:?} {t:?}");
                assert!(prf.f1 == f1, "{p:?} {t:?}");
            }
        }
    }
}

#[test]
fn relabeling_invariance_under_random_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let pred: Vec<usize> = (0..40).map(|i| (i * 7 + i / 5) % 5).collect();
    let base = MetricsReport::evaluate(&pred, &truth).unwrap();
    let mut names: Vec<usize> = (0..5).map(|v| 10 * v + 3).collect();
    for _ in 0..100 {
        names.shuffle(&mut rng);
        let renamed: Vec<usize> = pred.iter().map(|l| names[*l]).collect();
        let r = MetricsReport::evaluate(&renamed, &truth).unwrap();
        for (a, b) in r.values().iter().zip(base.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_are_bounded(
        (p, t) in (2usize..60).prop_flat_map(|n| (
            prop::collection::vec(0usize..6, n),
            prop::collection::vec(0usize..6, n),
        ))
    ) {
        let r = MetricsReport::evaluate(&p, &t).unwrap();
        for (name, v) in MetricsReport::COLUMNS.iter().zip(r.values()) {
            if *name == "ARI" {
                prop_assert!((-1.0..=1.0).contains(&v));
            } else {
                prop_assert!((0.0..=1.0).contains(&v), "{} = {}", name, v);
            }
        }
        prop_assert!(r.purity >= r.acc - 1e-15);
        let same = MetricsReport::evaluate(&t, &t).unwrap();
        prop_assert!((same.acc - 1.0).abs() < 1e-15 && (same.ari - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_is_symmetric(
        (p, t) in (2usize..40).prop_flat_map(|n| (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        ))
    ) {
        let a = metrics::nmi(&p, &t).unwrap();
        let b = metrics::nmi(&t, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
