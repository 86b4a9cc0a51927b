//! Per-view similarity graphs: squared distances, the classic kernels, the
//! adaptive-neighbor closed form and symmetric affinity normalization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// One view, `d_v x n`, samples in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    data: DMatrix<f64>,
    view_id: usize,
}

impl ViewMatrix {
    pub fn new(data: DMatrix<f64>, view_id: usize) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "view {view_id} has {} samples, need at least 2",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidInput(format!("view {view_id} has no features")));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "view {view_id}: non-finite value at feature {}, sample {}",
                p % data.nrows(),
                p / data.nrows()
            )));
        }
        Ok(Self { data, view_id })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// Sparse row-stochastic similarity matrix. Row `i` lists its positive
/// entries as `(column, weight)` in increasing column order.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    k: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AffinityGraph {
    pub fn from_rows(n: usize, k: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                op: "AffinityGraph::from_rows",
                detail: format!("{} rows for n = {n}", rows.len()),
            });
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(j, _)| *j);
            if row.iter().any(|(j, w)| *j >= n || !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has an invalid entry")));
            }
        }
        Ok(Self { n, k, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbor_count(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |(c, _)| *c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, w)| w).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// `(S + S^T) / 2` as a dense matrix.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] += 0.5 * w;
                m[(j, i)] += 0.5 * w;
            }
        }
        m
    }
}

/// Symmetric normalized affinity `D^{-1/2} S_hat D^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAffinity {
    a: DMatrix<f64>,
}

impl NormalizedAffinity {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Wraps an already symmetric matrix.
    pub fn from_symmetric(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                op: "NormalizedAffinity::from_symmetric",
                detail: format!("{:?} is not square", a.shape()),
            });
        }
        let skew = (&a - a.transpose()).norm();
        if skew > 1e-12 * a.norm().max(1.0) {
            return Err(Error::InvalidInput(format!("affinity is not symmetric (skew {skew:e})")));
        }
        Ok(Self { a })
    }
}

/// Per-row duals of the adaptive-neighbor problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDuals {
    pub eta: Vec<f64>,
    pub gamma_row: Vec<f64>,
    /// Mean of `gamma_row`, the single regularizer used for diagnostics.
    pub gamma_mean: f64,
}

/// Squared Euclidean distances between columns.
pub fn pairwise_sq_dist(x: &ViewMatrix) -> DMatrix<f64> {
    let n = x.n_samples();
    let data = &x.data;
    let rows = par::map_range(n, |i| {
        let ci = data.column(i);
        (0..n)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    ci.iter()
                        .zip(data.column(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .max(0.0)
                }
            })
            .collect::<Vec<_>>()
    });
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// One row of the adaptive-neighbor solution.
struct NeighborRow {
    entries: Vec<(usize, f64)>,
    eta: f64,
    gamma: f64,
}

fn neighbor_row(i: usize, d: impl Fn(usize) -> f64, n: usize, k: usize) -> NeighborRow {
    // ascending distance, ties broken by smaller index; self excluded
    let mut order: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (d(j), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let near = &order[..k];
    let first = near[0].0;
    let kth = near[k - 1].0;
    // With k = n - 1 there is no (k+1)-th neighbor; extend the profile by the
    // mean gap so every point keeps positive weight.
    let next = if k < order.len() {
        order[k].0
    } else {
        kth + (kth - first) / k as f64
    };
    let gaps: Vec<f64> = near.iter().map(|(dj, _)| next - dj).collect();
    let total: f64 = gaps.iter().sum();
    let sum_d: f64 = near.iter().map(|(dj, _)| dj).sum();

    if next == first || total <= 0.0 {
        // all of the first k+1 distances coincide: gamma_i = 0
        let w = 1.0 / k as f64;
        let mut entries: Vec<(usize, f64)> = near.iter().map(|&(_, j)| (j, w)).collect();
        entries.sort_by_key(|e| e.0);
        return NeighborRow {
            entries,
            eta: w,
            gamma: 0.0,
        };
    }

    let gamma = 0.5 * total;
    let eta = 1.0 / k as f64 + sum_d / (2.0 * k as f64 * gamma);
    let mut entries: Vec<(usize, f64)> = near
        .iter()
        .zip(&gaps)
        .filter(|(_, g)| **g > 0.0)
        .map(|(&(_, j), g)| (j, g / total))
        .collect();
    entries.sort_by_key(|e| e.0);
    NeighborRow { entries, eta, gamma }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidConfig {
            field: "k",
            reason: format!("neighbor count must satisfy 1 <= k <= n-1 = {}, got {k}", n.saturating_sub(1)),
        });
    }
    Ok(())
}

/// Closed-form adaptive-neighbor rows from an arbitrary symmetric distance
/// matrix: `s_ij = (-d_ij / (2 gamma_i) + eta_i)_+` with per-row duals chosen
/// so that exactly the `k` nearest points receive positive weight.
pub fn adaptive_neighbors_from_distances(
    d: &DMatrix<f64>,
    k: usize,
) -> Result<(AffinityGraph, NeighborDuals)> {
    let n = d.nrows();
    if !d.is_square() {
        return Err(Error::DimensionMismatch {
            op: "adaptive_neighbors_from_distances",
            detail: format!("distance matrix {:?} is not square", d.shape()),
        });
    }
    check_k(k, n)?;
    let rows = par::map_range(n, |i| neighbor_row(i, |j| d[(i, j)], n, k));
    let mut eta = Vec::with_capacity(n);
    let mut gamma_row = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for r in rows {
        eta.push(r.eta);
        gamma_row.push(r.gamma);
        entries.push(r.entries);
    }
    let gamma_mean = gamma_row.iter().sum::<f64>() / n as f64;
    Ok((
        AffinityGraph { n, k, rows: entries },
        NeighborDuals {
            eta,
            gamma_row,
            gamma_mean,
        },
    ))
}

pub fn adaptive_neighbor_graph(x: &ViewMatrix, k: usize) -> Result<(AffinityGraph, NeighborDuals)> {
    check_k(k, x.n_samples())?;
    adaptive_neighbors_from_distances(&pairwise_sq_dist(x), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelKind {
    /// `exp(-||xi - xj||^2 / (2 scale))`
    Gaussian { scale: f64 },
    Cosine,
    /// Plain Euclidean distance `||xi - xj||`.
    Euclidean,
    Binary,
}

/// Dense complete-graph similarity under one of the classic kernels.
pub fn kernel_graph(x: &ViewMatrix, kind: KernelKind) -> Result<DMatrix<f64>> {
    let n = x.n_samples();
    match kind {
        KernelKind::Binary => Ok(DMatrix::from_element(n, n, 1.0)),
        KernelKind::Gaussian { scale } => {
            if !(scale > 0.0) {
                return Err(Error::InvalidConfig {
                    field: "scale",
                    reason: format!("gaussian scale must be positive, got {scale}"),
                });
            }
            Ok(pairwise_sq_dist(x).map(|d| (-d / (2.0 * scale)).exp()))
        }
        KernelKind::Euclidean => Ok(pairwise_sq_dist(x).map(f64::sqrt)),
        KernelKind::Cosine => {
            let norms: Vec<f64> = x.data.column_iter().map(|c| c.norm()).collect();
            if let Some(j) = norms.iter().position(|v| *v == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "cosine similarity undefined: sample {j} of view {} has zero norm",
                    x.view_id
                )));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| {
                x.data.column(i).dot(&x.data.column(j)) / (norms[i] * norms[j])
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffinityNormalization {
    /// `D^{-1/2} S_hat D^{-1/2}` on the symmetrized graph.
    #[default]
    Symmetric,
    /// `D^{-1/2} S D^{+1/2}` on the raw graph, then symmetrized so the
    /// embedding step still sees a symmetric matrix.
    Literal,
}

pub fn normalize_affinity(s: &AffinityGraph, mode: AffinityNormalization) -> Result<NormalizedAffinity> {
    let n = s.n;
    if let Some(row) = (0..n).find(|&i| s.row_sum(i) <= 0.0) {
        return Err(Error::DegenerateGraph { row });
    }
    let a = match mode {
        AffinityNormalization::Symmetric => {
            let sh = s.symmetrized();
            let deg: Vec<f64> = sh.row_iter().map(|r| r.sum()).collect();
            let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| sh[(i, j)] * inv[i] * inv[j])
        }
        AffinityNormalization::Literal => {
            let raw = s.to_dense();
            let deg: Vec<f64> = (0..n).map(|i| s.row_sum(i)).collect();
            let m = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] * (deg[j] / deg[i]).sqrt());
            (&m + m.transpose()) * 0.5
        }
    };
    // exact symmetry for the eigensolvers downstream
    let a = (&a + a.transpose()) * 0.5;
    Ok(NormalizedAffinity { a })
}
