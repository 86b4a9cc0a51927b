mod common;

use std::time::Instant;

use cgmvc_core::consensus::RotationBlock;
use cgmvc_core::embedding::NormMode;
use cgmvc_core::graph::{AffinityGraph, ViewMatrix};
use cgmvc_core::io::{generate_synthetic, MultiViewDataset, RunReport, SyntheticSpec};
use cgmvc_core::metrics;
use cgmvc_core::oracle;
use cgmvc_core::pipeline::{self, extract_labels, kmeans, run_pipeline, KmeansTarget, LabelSource, PipelineConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synth(n_per_cluster: usize) -> MultiViewDataset {
    generate_synthetic(&SyntheticSpec {
        n_per_cluster,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

#[test]
fn synthetic_defaults_recover_clusters() {
    let ds = synth(50);
    let r = run_pipeline(&ds, &PipelineConfig::new(10, 3)).unwrap();
    let m = r.metrics.unwrap();
    assert!(m.acc >= 0.95, "{m:?}");
    assert!(m.nmi >= 0.90, "{m:?}");
    assert_eq!(r.labels.len(), 150);
    assert!(r.step2_trace.len() <= 100);
    assert!(r.step2_trace.iter().all(|v| v.is_finite()));
}

#[test]
fn runs_are_deterministic() {
    let ds = synth(20);
    let mut cfg = PipelineConfig::new(6, 3);
    cfg.max_iter = 15;
    cfg.seed = 42;
    let a = run_pipeline(&ds, &cfg).unwrap();
    let b = run_pipeline(&ds, &cfg).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.step2_trace, b.step2_trace);
    assert_eq!(a.consensus_trace, b.consensus_trace);
    let mut ra = RunReport::new(&ds, &cfg, &a, "labels.txt");
    let mut rb = RunReport::new(&ds, &cfg, &b, "labels.txt");
    ra.timing = Default::default();
    rb.timing = Default::default();
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn pool_size_does_not_change_results() {
    let ds = synth(15);
    let mut cfg = PipelineConfig::new(5, 3);
    cfg.max_iter = 10;
    cfg.restarts = 8;
    cfg.kmeans_target = KmeansTarget::StackedEmbeddings;
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_pipeline(&ds, &cfg)).unwrap();
    let b = four.install(|| run_pipeline(&ds, &cfg)).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.step2_trace, b.step2_trace);
    let pts = DMatrix::from_fn(60, 3, |i, j| ((i * 7 + j * 13) % 11) as f64);
    let ka = one.install(|| kmeans(&pts, 4, 12, 3)).unwrap();
    let kb = four.install(|| kmeans(&pts, 4, 12, 3)).unwrap();
    assert_eq!(ka, kb);
}

#[test]
fn single_iteration_still_labels_everything() {
    let ds = synth(15);
    let mut cfg = PipelineConfig::new(5, 3);
    cfg.max_iter = 1;
    let r = run_pipeline(&ds, &cfg).unwrap();
    assert_eq!(r.step2_trace.len(), 1);
    assert!(!r.step2_converged);
    assert_eq!(r.labels.len(), 45);
    assert!(r.labels.iter().all(|l| *l < 45));
    assert!(r.consensus_trace.len() <= 1);
}

#[test]
fn copies_of_one_view_match_the_single_view_run() {
    let ds = synth(30);
    let single = MultiViewDataset::new("one", vec![ds.views[1].clone()], ds.labels.clone()).unwrap();
    let copies = MultiViewDataset::new(
        "copies",
        (0..3)
            .map(|v| ViewMatrix::new(ds.views[1].data().clone(), v).unwrap())
            .collect(),
        ds.labels.clone(),
    )
    .unwrap();
    let cfg = PipelineConfig::new(8, 3);
    let a = run_pipeline(&single, &cfg).unwrap().metrics.unwrap();
    let b = run_pipeline(&copies, &cfg).unwrap().metrics.unwrap();
    assert!((a.acc - b.acc).abs() <= 0.02, "{a:?} vs {b:?}");
}

#[test]
fn every_norm_mode_runs() {
    let ds = synth(20);
    for mode in NormMode::ALL {
        let mut cfg = PipelineConfig::new(6, 3);
        cfg.norm = mode;
        cfg.max_iter = 20;
        let r = run_pipeline(&ds, &cfg).unwrap();
        assert!(r.metrics.unwrap().acc > 0.8, "{mode}");
    }
}

#[test]
fn doubling_n_is_not_explosive() {
    let mut cfg = PipelineConfig::new(8, 3);
    cfg.max_iter = 15;
    cfg.eps = 1e-300;
    let time = |n_per_cluster: usize| {
        let ds = synth(n_per_cluster);
        (0..3)
            .map(|_| {
                let t = Instant::now();
                run_pipeline(&ds, &cfg).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let small = time(40);
    let large = time(80);
    assert!(large / small <= 10.0, "{small:.3}s -> {large:.3}s");
}

#[test]
fn tight_q_clouds_are_recovered_by_kmeans() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let raw = DMatrix::from_fn(30, 3, |i, j| if truth[i] == j { 1.0 } else { 0.0 } + 1e-3 * rng.random_range(-1.0..1.0));
    let q = RotationBlock::new(raw.qr().q()).unwrap();
    // one connected component forces the k-means path
    let rows = (0..30).map(|i| vec![((i + 1) % 30, 1.0)]).collect();
    let s = AffinityGraph::from_rows(30, 1, rows).unwrap();
    let cfg = PipelineConfig::new(1, 3);
    let (labels, source) = extract_labels(&s, &q, &[], 3, &cfg).unwrap();
    assert!(matches!(source, LabelSource::KMeans { .. }));
    assert_eq!(metrics::accuracy(&labels, &truth).unwrap(), 1.0);
    assert_eq!(extract_labels(&s, &q, &[], 3, &cfg).unwrap().0, labels);
}

#[test]
fn block_graph_labels_come_from_components() {
    let rows = vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(3, 1.0)], vec![(2, 1.0)]];
    let s = AffinityGraph::from_rows(4, 1, rows).unwrap();
    let q = RotationBlock::new(DMatrix::from_fn(4, 2, |i, j| if i / 2 == j { 0.5f64.sqrt() } else { 0.0 })).unwrap();
    let (labels, source) = extract_labels(&s, &q, &[], 2, &PipelineConfig::new(1, 2)).unwrap();
    assert_eq!(source, LabelSource::Components);
    assert_eq!(labels, vec![0, 0, 1, 1]);
}

#[test]
fn kmeans_finds_the_exhaustive_optimum_on_tiny_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let n = rng.random_range(3..9);
        let c = rng.random_range(1..4.min(n));
        let pts = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
        let ours = kmeans(&pts, c, 20, 5).unwrap();
        let best = oracle::exhaustive_kmeans(&pts.transpose(), c);
        assert!((ours.objective - best).abs() <= 1e-9 * best.max(1.0), "{} vs {best}", ours.objective);
    }
}

#[test]
fn invalid_configs_name_the_field() {
    let ds = synth(5);
    let mut cfg = PipelineConfig::new(20, 3);
    let err = run_pipeline(&ds, &cfg).unwrap_err().to_string();
    assert!(err.contains('k'), "{err}");
    cfg.k = 3;
    cfg.clusters = 1;
    assert!(run_pipeline(&ds, &cfg).unwrap_err().to_string().contains("clusters"));
    cfg.clusters = 3;
    cfg.rho = -1.0;
    assert!(run_pipeline(&ds, &cfg).unwrap_err().to_string().contains("rho"));
    assert!(pipeline::convergence_check(1.0, 1.0, 1e-6));
}
