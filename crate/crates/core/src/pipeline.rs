//! End-to-end driver: per-view graphs, normalized affinities, the embedding
//! and tensor loop, the consensus graph and the final labels.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{self, ConsensusProblem, ConsensusStep, RotationBlock};
use crate::embedding::{self, NormMode, Step2Config};
use crate::error::{Error, Result};
use crate::graph::{self, AffinityGraph, AffinityNormalization};
use crate::io::MultiViewDataset;
use crate::metrics::MetricsReport;
use crate::par;
use crate::tensor::{FixedPointOptions, GammaParam};

/// Relative change test `|curr - prev| / |prev| < eps`; falls back to the
/// absolute change when `prev` is zero.
pub fn convergence_check(prev: f64, curr: f64, eps: f64) -> bool {
    let delta = (curr - prev).abs();
    if prev == 0.0 {
        delta < eps
    } else {
        delta / prev.abs() < eps
    }
}

/// What k-means clusters when the consensus graph does not already have
/// exactly `c` components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KmeansTarget {
    /// Rows of the consensus rotation block `Q`.
    #[default]
    ConsensusQ,
    /// Rows of the horizontally stacked normalized embeddings.
    StackedEmbeddings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PipelineConfig {
    pub k: usize,
    pub clusters: usize,
    pub gamma: GammaParam,
    /// `None` selects `1/sqrt(n)`.
    pub lambda: Option<f64>,
    pub rho: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub norm: NormMode,
    pub seed: u64,
    pub affinity_normalization: AffinityNormalization,
    pub fixed_point: FixedPointOptions,
    pub picard_relaxation: f64,
    pub tnn_weights: Option<Vec<f64>>,
    /// Neighbor count for the consensus step; `None` reuses `k`.
    pub consensus_k: Option<usize>,
    pub kmeans_target: KmeansTarget,
}

impl PipelineConfig {
    pub fn new(k: usize, clusters: usize) -> Self {
        Self {
            k,
            clusters,
            gamma: GammaParam::new(0.1).expect("positive"),
            lambda: None,
            rho: 1e-3,
            eps: 1e-6,
            max_iter: 100,
            restarts: 20,
            norm: NormMode::TGamma,
            seed: 0,
            affinity_normalization: AffinityNormalization::Symmetric,
            fixed_point: FixedPointOptions::default(),
            picard_relaxation: 0.5,
            tnn_weights: None,
            consensus_k: None,
            kmeans_target: KmeansTarget::ConsensusQ,
        }
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda.unwrap_or(1.0 / (n as f64).sqrt())
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::InvalidConfig {
                field: "k",
                reason: format!("need 1 <= k < n = {n}, got {}", self.k),
            });
        }
        if let Some(ck) = self.consensus_k {
            if ck == 0 || ck >= n {
                return Err(Error::InvalidConfig {
                    field: "consensus-k",
                    reason: format!("need 1 <= k < n = {n}, got {ck}"),
                });
            }
        }
        if self.clusters < 2 || self.clusters >= n {
            return Err(Error::InvalidConfig {
                field: "clusters",
                reason: format!("need 2 <= c < n = {n}, got {}", self.clusters),
            });
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig {
                field: "restarts",
                reason: "must be at least 1".into(),
            });
        }
        self.step2(n).validate()
    }

    pub fn step2(&self, n: usize) -> Step2Config {
        Step2Config {
            lambda: self.lambda_for(n),
            rho: self.rho,
            gamma: self.gamma,
            max_iter: self.max_iter,
            tol: self.eps,
            norm_mode: self.norm,
            tnn_weights: self.tnn_weights.clone(),
            fixed_point: self.fixed_point,
            picard_relaxation: self.picard_relaxation,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub graphs: f64,
    pub normalize: f64,
    pub embedding: f64,
    pub consensus: f64,
    pub labels: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.graphs + self.normalize + self.embedding + self.consensus + self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum LabelSource {
    /// Labels are the connected components of the consensus graph.
    Components,
    KMeans { objective: f64 },
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub labels: Vec<usize>,
    pub consensus: AffinityGraph,
    pub q: RotationBlock,
    pub fbars: Vec<DMatrix<f64>>,
    pub step2_trace: Vec<f64>,
    pub step2_converged: bool,
    pub consensus_trace: Vec<ConsensusStep>,
    pub consensus_converged: bool,
    pub consensus_components: usize,
    pub label_source: LabelSource,
    pub metrics: Option<MetricsReport>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub objective: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once(points: &[Vec<f64>], c: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.len();
    let dim = points[0].len();

    // distance-weighted seeding
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut best_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < c {
        let next = match WeightedIndex::new(&best_d) {
            Ok(w) => w.sample(rng),
            // all remaining points coincide with a center
            Err(_) => rng.random_range(0..n),
        };
        centers.push(points[next].clone());
        for (bd, p) in best_d.iter_mut().zip(points) {
            *bd = bd.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (best, _) = centers
                .iter()
                .enumerate()
                .map(|(j, cj)| (j, sq_dist(p, cj)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..c {
            if counts[j] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .map(|i| (i, sq_dist(&points[i], &centers[labels[i]])))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc })
                    .0;
                centers[j] = points[far].clone();
                labels[far] = j;
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let objective = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    KMeansResult { labels, objective }
}

/// Relabels so that clusters are numbered in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Lloyd's algorithm with distance-weighted seeding; the restart with the
/// smallest within-cluster sum of squares wins (ties go to the earlier
/// restart). Restart `r` draws from its own ChaCha stream, so results do not
/// depend on how restarts are scheduled.
pub fn kmeans(points: &DMatrix<f64>, c: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if c == 0 || c > n {
        return Err(Error::InvalidInput(format!("k-means needs 1 <= c <= n = {n}, got {c}")));
    }
    let rows: Vec<Vec<f64>> = points.row_iter().map(|r| r.iter().copied().collect()).collect();
    let runs = par::map_range(restarts.max(1), |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        kmeans_once(&rows, c, &mut rng)
    });
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("at least one restart");
    Ok(KMeansResult {
        labels: canonical_labels(&best.labels),
        objective: best.objective,
    })
}

/// Component labels when the graph has exactly `c` components, otherwise
/// k-means on the configured target.
pub fn extract_labels(
    s: &AffinityGraph,
    q: &RotationBlock,
    fbars: &[DMatrix<f64>],
    c: usize,
    cfg: &PipelineConfig,
) -> Result<(Vec<usize>, LabelSource)> {
    let (count, labels) = consensus::connected_components(s);
    if count == c {
        return Ok((labels, LabelSource::Components));
    }
    let points = match cfg.kmeans_target {
        KmeansTarget::ConsensusQ => q.matrix().clone(),
        KmeansTarget::StackedEmbeddings => {
            let n = s.n();
            let cols: usize = fbars.iter().map(|f| f.ncols()).sum();
            let mut m = DMatrix::zeros(n, cols);
            let mut at = 0;
            for f in fbars {
                m.columns_mut(at, f.ncols()).copy_from(f);
                at += f.ncols();
            }
            m
        }
    };
    let km = kmeans(&points, c, cfg.restarts, cfg.seed)?;
    Ok((km.labels, LabelSource::KMeans { objective: km.objective }))
}

pub fn run_pipeline(data: &MultiViewDataset, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let n = data.n_samples();
    cfg.validate(n)?;
    let c = cfg.clusters;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let graphs = par::try_map_range(data.views.len(), |v| {
        graph::adaptive_neighbor_graph(&data.views[v], cfg.k).map(|(g, _)| g)
    })
    .map_err(|e| e.in_stage("graph construction"))?;
    timings.graphs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let affinities = graphs
        .iter()
        .map(|g| graph::normalize_affinity(g, cfg.affinity_normalization))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("affinity normalization"))?;
    timings.normalize = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let step2 = embedding::run_step2(&affinities, c, &cfg.step2(n)).map_err(|e| e.in_stage("embedding"))?;
    timings.embedding = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let fbars = step2.fbars();
    let problem = ConsensusProblem {
        fbars: fbars.clone(),
        k: cfg.consensus_k.unwrap_or(cfg.k),
        c,
    };
    let cons = consensus::run_consensus(&problem, cfg.max_iter, cfg.eps).map_err(|e| e.in_stage("consensus"))?;
    timings.consensus = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (labels, label_source) =
        extract_labels(&cons.graph, &cons.q, &fbars, c, cfg).map_err(|e| e.in_stage("labels"))?;
    timings.labels = clock.elapsed().as_secs_f64();

    let metrics = data
        .labels
        .as_ref()
        .map(|truth| MetricsReport::evaluate(&labels, truth))
        .transpose()?;

    Ok(PipelineResult {
        labels,
        consensus: cons.graph,
        q: cons.q,
        fbars,
        step2_trace: step2.trace,
        step2_converged: step2.converged,
        consensus_trace: cons.trace,
        consensus_converged: cons.converged,
        consensus_components: cons.components,
        label_source,
        metrics,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_predicate() {
        assert!(convergence_check(10.0, 10.0, 1e-6));
        assert!(!convergence_check(10.0, 9.0, 1e-6));
        assert!(convergence_check(10.0, 10.0 - 1e-7, 1e-6));
        assert!(!convergence_check(-10.0, -9.0, 1e-6));
        assert!(convergence_check(0.0, 1e-7, 1e-6));
        assert!(!convergence_check(0.0, 1e-3, 1e-6));
    }

    #[test]
    fn kmeans_identical_groups() {
        let pts = DMatrix::from_row_slice(6, 2, &[0., 0., 0., 0., 5., 5., 5., 5., -3., 2., -3., 2.]);
        let r = kmeans(&pts, 3, 5, 1).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.labels, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn kmeans_1d_two_groups() {
        let pts = DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        let r = kmeans(&pts, 2, 3, 7).unwrap();
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn kmeans_more_restarts_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = DMatrix::from_fn(60, 2, |_, _| rng.random_range(0.0..1.0));
        let one = kmeans(&pts, 6, 1, 11).unwrap();
        let many = kmeans(&pts, 6, 20, 11).unwrap();
        assert!(many.objective <= one.objective);
        assert_eq!(kmeans(&pts, 6, 20, 11).unwrap(), many);
    }

    #[test]
    fn canonical_relabel() {
        assert_eq!(canonical_labels(&[5, 5, 2, 9, 2]), vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn config_validation() {
        let cfg = PipelineConfig::new(5, 3);
        assert!(cfg.validate(50).is_ok());
        assert!(PipelineConfig::new(50, 3).validate(50).is_err());
        assert!(PipelineConfig::new(5, 1).validate(50).is_err());
        let mut bad = cfg.clone();
        bad.rho = 0.0;
        assert!(bad.validate(50).is_err());
        assert!((cfg.lambda_for(100) - 0.1).abs() < 1e-15);
    }
}
