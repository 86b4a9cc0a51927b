//! Consensus graph with a Laplacian rank constraint.
//!
//! Alternates a Ky Fan step on the graph Laplacian (the `c` smallest
//! eigenvectors `Q`) with an adaptive-neighbor step on the combined
//! distances `lambda ||q_i - q_j||^2 + sum_v ||fbar_i - fbar_j||^2`. The
//! weight `lambda` starts at the mean neighbor regularizer and is doubled
//! while the graph has too few components and halved while it has too many.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::top_eigenvectors;
use crate::error::{Error, Result};
use crate::graph::{adaptive_neighbors_from_distances, AffinityGraph};
use crate::par;
use crate::pipeline::convergence_check;

/// Graph entries at or below this weight are not edges.
pub const SUPPORT_EPS: f64 = 1e-12;
/// Relative eigenvalue tolerance for counting Laplacian zero eigenvalues.
pub const ZERO_EIG_TOL: f64 = 1e-8;
pub const LAMBDA_MIN: f64 = 1e-8;
pub const LAMBDA_MAX: f64 = 1e8;
/// `tr(Q^T L Q)` below this means `Q` already spans the Laplacian null space.
const RANK_GAP_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct ConsensusProblem {
    pub fbars: Vec<DMatrix<f64>>,
    pub k: usize,
    pub c: usize,
}

impl ConsensusProblem {
    pub fn validate(&self) -> Result<()> {
        let first = self.fbars.first().ok_or_else(|| Error::InvalidInput("no embeddings".into()))?;
        let shape = first.shape();
        if let Some(v) = self.fbars.iter().position(|f| f.shape() != shape) {
            return Err(Error::DimensionMismatch {
                op: "ConsensusProblem",
                detail: format!("view {v} is {:?}, view 0 is {shape:?}", self.fbars[v].shape()),
            });
        }
        if self.c == 0 || self.c > shape.0 {
            return Err(Error::InvalidConfig {
                field: "clusters",
                reason: format!("need 1 <= c <= n = {}, got {}", shape.0, self.c),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationBlock {
    q: DMatrix<f64>,
}

impl RotationBlock {
    /// Wraps an `n x c` matrix with orthonormal columns.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let c = q.ncols();
        let defect = (q.transpose() * &q - DMatrix::identity(c, c)).norm();
        if defect > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "rotation block columns are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self { q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianView {
    l: DMatrix<f64>,
}

impl LaplacianView {
    /// `L = D - S_hat` with `S_hat = (S + S^T)/2`.
    pub fn from_graph(s: &AffinityGraph) -> Self {
        let sh = s.symmetrized();
        let deg: Vec<f64> = sh.row_iter().map(|r| r.sum()).collect();
        let mut l = -sh;
        for (i, d) in deg.into_iter().enumerate() {
            l[(i, i)] += d;
        }
        Self { l }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `tr(Q^T L Q)`
    pub fn trace_form(&self, q: &RotationBlock) -> f64 {
        (q.q.transpose() * &self.l * &q.q).trace()
    }
}

/// `d_ij = lambda ||q_i - q_j||^2 + sum_v ||fbar_i - fbar_j||^2`.
///
/// The `1/V` of the per-row problem is not applied here: the neighbor duals
/// are recomputed from `d` itself, so a constant factor cancels.
pub fn embedding_distances(fbars: &[DMatrix<f64>], q: Option<&RotationBlock>, lambda: f64) -> DMatrix<f64> {
    let n = fbars.first().map_or(0, |f| f.nrows());
    let mut blocks: Vec<DMatrix<f64>> = fbars.to_vec();
    if let Some(q) = q {
        if lambda != 0.0 {
            blocks.push(&q.q * lambda.sqrt());
        }
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut g = DMatrix::zeros(n, cols);
    let mut at = 0;
    for b in &blocks {
        g.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    let rows = par::map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    g.row(i)
                        .iter()
                        .zip(g.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                }
            })
            .collect::<Vec<f64>>()
    });
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Eigenvectors of the `c` smallest Laplacian eigenvalues.
pub fn update_q(l: &LaplacianView, c: usize) -> Result<RotationBlock> {
    let n = l.l.nrows();
    if c == 0 || c > n {
        return Err(Error::DimensionMismatch {
            op: "update_q",
            detail: format!("c = {c} for n = {n}"),
        });
    }
    let (_, q) = top_eigenvectors(&l.l, c, false, "update_q")?;
    Ok(RotationBlock { q })
}

/// Adaptive-neighbor rows on a precomputed distance matrix.
pub fn update_s_rows(d: &DMatrix<f64>, k: usize) -> Result<AffinityGraph> {
    adaptive_neighbors_from_distances(d, k).map(|(g, _)| g)
}

/// Number of Laplacian eigenvalues at or below `tol * max(eigenvalue)`.
pub fn zero_eig_multiplicity(l: &LaplacianView, tol: f64) -> Result<usize> {
    let eig = nalgebra::SymmetricEigen::try_new(l.l.clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailed { context: "zero_eig_multiplicity" })?;
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Ok(l.l.nrows());
    }
    Ok(eig.eigenvalues.iter().filter(|v| **v <= tol * top).count())
}

/// Connected components of the support of `(S + S^T)/2`, labelled in order
/// of first appearance.
pub fn connected_components(s: &AffinityGraph) -> (usize, Vec<usize>) {
    let n = s.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for &(j, w) in s.row(i) {
            if w > SUPPORT_EPS {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut ids = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for i in 0..n {
        let r = find(&mut parent, i);
        if ids[r] == usize::MAX {
            ids[r] = count;
            count += 1;
        }
        labels[i] = ids[r];
    }
    (count, labels)
}

/// `sum_ij s_ij d_ij + sum_i gamma_i ||s_i||^2`
fn row_objective(s: &AffinityGraph, d: &DMatrix<f64>, gamma_row: &[f64]) -> f64 {
    (0..s.n())
        .map(|i| {
            let lin: f64 = s.row(i).iter().map(|&(j, w)| w * d[(i, j)]).sum();
            let quad: f64 = s.row(i).iter().map(|&(_, w)| w * w).sum();
            lin + gamma_row[i] * quad
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusStep {
    pub lambda: f64,
    pub components: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub graph: AffinityGraph,
    pub q: RotationBlock,
    pub trace: Vec<ConsensusStep>,
    /// True when the loop stopped with exactly `c` components and a stable
    /// objective. Otherwise `graph` is the iterate whose component count was
    /// closest to `c`.
    pub converged: bool,
    pub components: usize,
}

pub fn run_consensus(p: &ConsensusProblem, max_iter: usize, tol: f64) -> Result<ConsensusResult> {
    p.validate()?;
    let c = p.c;
    let d_f = embedding_distances(&p.fbars, None, 0.0);
    let (mut s, duals) = adaptive_neighbors_from_distances(&d_f, p.k)?;
    let mut lambda = if duals.gamma_mean > 0.0 { duals.gamma_mean } else { 1.0 };
    lambda = lambda.clamp(LAMBDA_MIN, LAMBDA_MAX);

    let (comps0, _) = connected_components(&s);
    let mut best = (comps0.abs_diff(c), s.clone(), comps0);
    let mut trace = Vec::new();
    let mut prev_obj: Option<f64> = None;
    let mut converged = false;

    for _ in 0..max_iter {
        let q = update_q(&LaplacianView::from_graph(&s), c)?;
        let d = embedding_distances(&p.fbars, Some(&q), lambda);
        let (s_new, duals) = adaptive_neighbors_from_distances(&d, p.k)?;
        let (comps, _) = connected_components(&s_new);
        let obj = row_objective(&s_new, &d, &duals.gamma_row);
        trace.push(ConsensusStep {
            lambda,
            components: comps,
            objective: obj,
        });
        s = s_new;
        if comps.abs_diff(c) <= best.0 {
            best = (comps.abs_diff(c), s.clone(), comps);
        }
        if comps == c {
            // Q spanning the new null space makes the next sweep a fixed point:
            // d only depends on Q through rotation-invariant row distances.
            let settled = LaplacianView::from_graph(&s).trace_form(&q) <= RANK_GAP_EPS;
            let stable = prev_obj.is_some_and(|po| convergence_check(po, obj, tol));
            if settled || stable {
                converged = true;
                break;
            }
        } else if comps < c {
            lambda = (lambda * 2.0).min(LAMBDA_MAX);
        } else {
            lambda = (lambda / 2.0).max(LAMBDA_MIN);
        }
        prev_obj = Some(obj);
    }

    let (graph, components) = if converged {
        let comps = connected_components(&s).0;
        (s, comps)
    } else {
        log::debug!(
            "run_consensus: {} components after {max_iter} sweeps (wanted {c})",
            best.2
        );
        (best.1, best.2)
    };
    let q = update_q(&LaplacianView::from_graph(&graph), c)?;
    Ok(ConsensusResult {
        graph,
        q,
        trace,
        converged,
        components,
    })
}
