mod common;

use cgmvc_core::consensus::{self, ConsensusProblem, LaplacianView, ZERO_EIG_TOL};
use cgmvc_core::graph::{self, AffinityGraph, ViewMatrix};
use cgmvc_core::oracle;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_eigenvalues_count_components(
        n in 3usize..14,
        groups in 1usize..5,
        k in 1usize..3,
        seed in any::<u64>(),
    ) {
        // points in `groups` far-apart clumps give graphs with a known minimum
        // number of components; small k can split clumps further
        let sizes: Vec<usize> = (0..groups).map(|g| n / groups + usize::from(g < n % groups)).collect();
        prop_assume!(sizes.iter().all(|s| *s > k));
        let (x, _) = common::blobs(&sizes, 4, 3.0, seed);
        let (g, _) = graph::adaptive_neighbor_graph(&ViewMatrix::new(x, 0).unwrap(), k).unwrap();
        let (count, labels) = consensus::connected_components(&g);
        let mult = consensus::zero_eig_multiplicity(&LaplacianView::from_graph(&g), ZERO_EIG_TOL).unwrap();
        prop_assert_eq!(count, mult);
        prop_assert_eq!(count, oracle::dfs_components(&g.to_dense(), consensus::SUPPORT_EPS));
        prop_assert!(count >= groups);
        prop_assert_eq!(labels.len(), n);
        prop_assert_eq!(labels[0], 0);
    }

    #[test]
    fn consensus_recovers_blocks(
        sizes in prop::collection::vec(4usize..8, 2..5),
        views in 1usize..4,
        noise in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        // with k = 3 a block splits into two closed neighborhoods only when it
        // has at least 8 rows, and stays apart from other blocks when it has
        // more than 3
        let c = sizes.len();
        let fbars: Vec<DMatrix<f64>> = (0..views)
            .map(|v| common::block_fbar(&sizes, noise, seed.wrapping_add(v as u64)))
            .collect();
        let p = ConsensusProblem { fbars, k: 3, c };
        let r = consensus::run_consensus(&p, 50, 1e-6).unwrap();
        prop_assert!(r.converged);
        let l = LaplacianView::from_graph(&r.graph);
        let mult = consensus::zero_eig_multiplicity(&l, ZERO_EIG_TOL).unwrap();
        let (count, labels) = consensus::connected_components(&r.graph);
        prop_assert_eq!(mult, c);
        prop_assert_eq!(count, c);
        prop_assert_eq!(r.components, c);
        prop_assert!(l.trace_form(&r.q) <= 1e-6);
        let q = r.q.matrix();
        prop_assert!((q.transpose() * q - DMatrix::identity(c, c)).norm() <= 1e-10);
        let mut start = 0;
        for (b, &sz) in sizes.iter().enumerate() {
            prop_assert!(labels[start..start + sz].iter().all(|l| *l == b));
            start += sz;
        }
    }
}

#[test]
fn laplacian_rows_sum_to_zero() {
    let g = AffinityGraph::from_rows(3, 1, vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(0, 1.0)]]).unwrap();
    let l = LaplacianView::from_graph(&g);
    for r in l.matrix().row_iter() {
        assert!(r.sum().abs() < 1e-15);
    }
    assert_eq!(consensus::zero_eig_multiplicity(&l, ZERO_EIG_TOL).unwrap(), 1);
}

#[test]
fn invalid_problems_are_rejected() {
    let f = DMatrix::from_element(5, 2, 0.5f64.sqrt());
    let bad_c = ConsensusProblem { fbars: vec![f.clone()], k: 2, c: 9 };
    assert!(consensus::run_consensus(&bad_c, 5, 1e-6).is_err());
    let mismatched = ConsensusProblem { fbars: vec![f, DMatrix::zeros(4, 2)], k: 2, c: 2 };
    assert!(consensus::run_consensus(&mismatched, 5, 1e-6).is_err());
    let none = ConsensusProblem { fbars: vec![], k: 2, c: 2 };
    assert!(consensus::run_consensus(&none, 5, 1e-6).is_err());
}
