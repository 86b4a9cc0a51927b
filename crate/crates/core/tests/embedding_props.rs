mod common;

use cgmvc_core::embedding::{self, NormMode, Step2Config};
use cgmvc_core::graph::{self, AffinityNormalization, NormalizedAffinity, ViewMatrix};
use cgmvc_core::tensor::{FixedPointOptions, GammaParam, Tensor3};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(mode: NormMode, rho: f64) -> Step2Config {
    Step2Config {
        lambda: 0.5,
        rho,
        gamma: GammaParam::new(0.1).unwrap(),
        max_iter: 30,
        tol: 1e-12,
        norm_mode: mode,
        tnn_weights: None,
        fixed_point: FixedPointOptions::default(),
        picard_relaxation: 0.5,
    }
}

fn unit_rows(n: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0));
    for mut r in m.row_iter_mut() {
        let nr = r.norm();
        r /= nr;
    }
    m
}

fn affinity(x: DMatrix<f64>, k: usize) -> NormalizedAffinity {
    let view = ViewMatrix::new(x, 0).unwrap();
    let (g, _) = graph::adaptive_neighbor_graph(&view, k).unwrap();
    graph::normalize_affinity(&g, AffinityNormalization::Symmetric).unwrap()
}

fn noisy_views(v: usize, seed: u64) -> Vec<NormalizedAffinity> {
    (0..v)
        .map(|i| affinity(common::blobs(&[8, 9, 7], 3, 4.0, seed + i as u64).0, 5))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn update_f_is_stiefel_and_beats_random_frames(n in 4usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = (&m + m.transpose()) * 0.5;
        let c = rng.random_range(1..n);
        let f = embedding::update_f(&h, c, 0).unwrap();
        prop_assert!(f.stiefel_defect() <= 1e-10);
        let best = (f.matrix().transpose() * &h * f.matrix()).trace();
        for _ in 0..1000 {
            let g = DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0));
            let q = g.qr().q();
            prop_assert!((q.transpose() * &h * &q).trace() <= best + 1e-10);
        }
    }

    #[test]
    fn row_normalization_gives_unit_rows(n in 2usize..15, c in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = {
            let m = DMatrix::from_fn(n.max(c), n.max(c), |_, _| rng.random_range(-1.0..1.0));
            (&m + m.transpose()) * 0.5
        };
        let f = embedding::update_f(&h, c.min(h.nrows()), 0).unwrap();
        let rn = embedding::row_normalize(&f, None);
        for (i, row) in rn.fbar.row_iter().enumerate() {
            prop_assert!((row.norm() - 1.0).abs() <= 1e-10);
            if !rn.degenerate_rows.contains(&i) {
                prop_assert!((rn.p[i] * f.matrix().row(i).norm() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn f_tensor_slices_are_psd_with_unit_diagonal(n in 2usize..10, c in 1usize..4, v in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fbars: Vec<_> = (0..v).map(|_| unit_rows(n, c, &mut rng)).collect();
        let t = embedding::assemble_f_tensor(&fbars).unwrap();
        prop_assert_eq!(t.dims(), (n, v, n));
        for s in 0..v {
            let slice = t.lateral_slice(s);
            prop_assert!((&slice - slice.transpose()).norm() <= 1e-12);
            prop_assert!(slice.diagonal().iter().all(|d| (d - 1.0).abs() <= 1e-12));
            let min = SymmetricEigen::new(slice).eigenvalues.min();
            prop_assert!(min >= -1e-9);
        }
    }
}

#[test]
fn t_step_never_increases_its_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..100 {
        let n = rng.random_range(3..9);
        let c = rng.random_range(1..4);
        let v = rng.random_range(1..4);
        let fbars: Vec<_> = (0..v).map(|_| unit_rows(n, c, &mut rng)).collect();
        let ften = embedding::assemble_f_tensor(&fbars).unwrap();
        let rho = 10f64.powf(rng.random_range(-3.0..0.5));
        for mode in NormMode::ALL {
            let cfg = cfg(mode, rho);
            let t = embedding::update_t(&ften, &cfg).unwrap();
            let after = embedding::t_objective(&ften, &t, &cfg).unwrap();
            let at_f = embedding::t_objective(&ften, &ften, &cfg).unwrap();
            let at_zero = embedding::t_objective(&ften, &Tensor3::zeros(n, v, n), &cfg).unwrap();
            assert!(after <= at_f + 1e-9, "trial {trial} {mode}: {after} > {at_f}");
            assert!(after <= at_zero + 1e-9, "trial {trial} {mode}: {after} > {at_zero}");
        }
    }
}

#[test]
fn tnn_mode_equals_unit_weighted_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fbars: Vec<_> = (0..3).map(|_| unit_rows(7, 2, &mut rng)).collect();
    let ften = embedding::assemble_f_tensor(&fbars).unwrap();
    let a = embedding::update_t(&ften, &cfg(NormMode::Tnn, 0.3)).unwrap();
    let mut weighted = cfg(NormMode::WeightedTnn, 0.3);
    weighted.tnn_weights = Some(vec![1.0; 3]);
    let b = embedding::update_t(&ften, &weighted).unwrap();
    assert_eq!(a, b);
}

#[test]
fn every_iterate_is_on_the_stiefel_manifold() {
    let views = noisy_views(2, 40);
    for it in 1..=6 {
        let mut c = cfg(NormMode::TGamma, 1e-2);
        c.max_iter = it;
        let out = embedding::run_step2(&views, 3, &c).unwrap();
        assert_eq!(out.trace.len(), it);
        for e in &out.embeddings {
            assert!(e.stiefel_defect() <= 1e-10);
        }
    }
}

#[test]
fn identical_views_give_identical_slices() {
    let a = affinity(common::blobs(&[6, 6, 6], 3, 3.0, 9).0, 4);
    let views = vec![a.clone(), a.clone(), a];
    let out = embedding::run_step2(&views, 3, &cfg(NormMode::TGamma, 1e-2)).unwrap();
    let s0 = out.t.lateral_slice(0);
    for v in 1..3 {
        assert!((out.t.lateral_slice(v) - &s0).abs().max() <= 1e-6);
    }
}

#[test]
fn single_view_matches_plain_spectral_embedding() {
    let (x, labels) = common::blobs(&[7, 7, 7], 3, 0.5, 2);
    let a = affinity(x, 4);
    let mut c = cfg(NormMode::Tnn, 1e6);
    c.lambda = 1e6;
    c.max_iter = 5;
    let out = embedding::run_step2(std::slice::from_ref(&a), 3, &c).unwrap();
    // same column space as the top-3 eigenvectors of A
    let eig = SymmetricEigen::new(a.matrix().clone());
    let mut idx: Vec<usize> = (0..21).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = DMatrix::from_fn(21, 3, |r, j| eig.eigenvectors[(r, idx[j])]);
    let f = out.embeddings[0].matrix();
    let proj = &top * top.transpose() * f;
    assert!((proj - f).norm() <= 1e-3);
    // rows of Fbar coincide within a block
    let fb = &out.normalizers[0].fbar;
    for i in 0..21 {
        for j in 0..21 {
            let same = (fb.row(i) - fb.row(j)).norm() < 1e-6;
            assert_eq!(same, labels[i] == labels[j], "rows {i} {j}");
        }
    }
}

#[test]
fn trace_is_monotone_once_scaling_settles() {
    for seed in [1u64, 2, 3, 4, 5] {
        let views = noisy_views(3, 100 * seed);
        let mut c = cfg(NormMode::TGamma, 1e-3);
        c.lambda = 1.0 / (24f64).sqrt();
        c.max_iter = 100;
        let out = embedding::run_step2(&views, 3, &c).unwrap();
        let tail = &out.trace[out.trace.len().saturating_sub(10)..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "seed {seed}: {tail:?}");
        }
        assert!(out.trace.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn unrelaxed_scheme_still_yields_valid_embeddings() {
    let views = noisy_views(2, 7);
    let mut c = cfg(NormMode::TGamma, 1e-3);
    c.picard_relaxation = 1.0;
    c.max_iter = 10;
    let out = embedding::run_step2(&views, 3, &c).unwrap();
    assert_eq!(out.trace.len(), 10);
    for e in &out.embeddings {
        assert!(e.stiefel_defect() <= 1e-10);
    }
}

#[test]
fn config_rejects_bad_values() {
    let mut c = cfg(NormMode::TGamma, 1e-3);
    c.picard_relaxation = 0.0;
    assert!(c.validate().is_err());
    c.picard_relaxation = 1.5;
    assert!(c.validate().is_err());
    let mut c = cfg(NormMode::WeightedTnn, 1e-3);
    c.tnn_weights = Some(vec![1.0, -1.0]);
    let fb = vec![DMatrix::from_element(3, 1, 1.0); 2];
    let ften = embedding::assemble_f_tensor(&fb).unwrap();
    assert!(embedding::update_t(&ften, &c).is_err());
}
