//! Alternating optimization of the per-view spectral embeddings and the
//! low-rank tensor that couples them.
//!
//! Each outer iteration
//! 1. builds `H = lambda A + 1/2 P (T_v + T_v^T) P - 1/2 P Fbar Fbar^T P` from
//!    the previous iterate (Picard linearization; the first iteration uses
//!    `H = lambda A`),
//! 2. takes the top-`c` eigenvectors of `H` as the new embedding,
//! 3. row-normalizes it and stacks `Fbar Fbar^T` as lateral slices of an
//!    `n x V x n` tensor,
//! 4. replaces `T` with the proximal point of the chosen low-rank penalty.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAffinity;
use crate::par;
use crate::pipeline::convergence_check;
use crate::tensor::{self, FixedPointOptions, GammaParam, Tensor3};

/// Rows with a norm below this are treated as zero by [`row_normalize`].
pub const ZERO_ROW_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    f: DMatrix<f64>,
    view_id: usize,
}

impl SpectralEmbedding {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn view_id(&self) -> usize {
        self.view_id
    }

    /// `||F^T F - I||_F`
    pub fn stiefel_defect(&self) -> f64 {
        let c = self.f.ncols();
        (self.f.transpose() * &self.f - DMatrix::identity(c, c)).norm()
    }
}

/// `P = diag(1 / ||f_i||)` and `Fbar = P F`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalizer {
    pub p: DVector<f64>,
    pub fbar: DMatrix<f64>,
    /// Rows replaced by the zero-row policy.
    pub degenerate_rows: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Non-convex t-Gamma quasi-norm.
    #[default]
    TGamma,
    /// Weighted tensor nuclear norm (convex baseline).
    WeightedTnn,
    /// Plain tensor nuclear norm (convex baseline, unit weights).
    Tnn,
}

impl NormMode {
    pub const ALL: [NormMode; 3] = [NormMode::TGamma, NormMode::WeightedTnn, NormMode::Tnn];

    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::TGamma => "t-gamma",
            NormMode::WeightedTnn => "weighted-tnn",
            NormMode::Tnn => "tnn",
        }
    }
}

impl std::str::FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t-gamma" => Ok(NormMode::TGamma),
            "weighted-tnn" => Ok(NormMode::WeightedTnn),
            "tnn" => Ok(NormMode::Tnn),
            other => Err(Error::InvalidConfig {
                field: "norm",
                reason: format!("unknown norm mode {other:?} (expected t-gamma, weighted-tnn or tnn)"),
            }),
        }
    }
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Config {
    pub lambda: f64,
    pub rho: f64,
    pub gamma: GammaParam,
    pub max_iter: usize,
    pub tol: f64,
    pub norm_mode: NormMode,
    /// Weights for `weighted-tnn`; `None` means all ones.
    pub tnn_weights: Option<Vec<f64>>,
    pub fixed_point: FixedPointOptions,
    /// Weight `w` in `p_h <- (1 - w) p_h + w p` for the row scaling used to
    /// build `H`. `1` uses the previous iterate's scaling as is; smaller values
    /// damp the period-two swing of `P` that the plain scheme falls into.
    pub picard_relaxation: f64,
}

impl Step2Config {
    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("lambda", self.lambda)?;
        positive("rho", self.rho)?;
        positive("eps", self.tol)?;
        if !(self.picard_relaxation > 0.0 && self.picard_relaxation <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "picard-relaxation",
                reason: format!("must lie in (0, 1], got {}", self.picard_relaxation),
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig {
                field: "max-iter",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn weights(&self, r: usize) -> Result<Vec<f64>> {
        match (&self.norm_mode, &self.tnn_weights) {
            (NormMode::WeightedTnn, Some(w)) => {
                if w.len() != r {
                    return Err(Error::InvalidConfig {
                        field: "tnn-weights",
                        reason: format!("need {r} weights, got {}", w.len()),
                    });
                }
                Ok(w.clone())
            }
            _ => Ok(vec![1.0; r]),
        }
    }
}

/// Symmetric matrix whose top eigenvectors give the next embedding.
pub fn assemble_h(
    a: &NormalizedAffinity,
    t_slice: &DMatrix<f64>,
    fbar_prev: &DMatrix<f64>,
    p_prev: &DVector<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let n = a.n();
    if t_slice.shape() != (n, n) || fbar_prev.nrows() != n || p_prev.len() != n {
        return Err(Error::DimensionMismatch {
            op: "assemble_h",
            detail: format!(
                "A is {n}x{n}, T slice {:?}, Fbar {:?}, P {}",
                t_slice.shape(),
                fbar_prev.shape(),
                p_prev.len()
            ),
        });
    }
    let p = p_prev;
    let mut pf = fbar_prev.clone();
    for (i, mut row) in pf.row_iter_mut().enumerate() {
        row *= p[i];
    }
    let pfpf = &pf * pf.transpose();
    let am = a.matrix();
    let h = DMatrix::from_fn(n, n, |i, j| {
        lambda * am[(i, j)] + 0.5 * p[i] * p[j] * (t_slice[(i, j)] + t_slice[(j, i)]) - 0.5 * pfpf[(i, j)]
    });
    Ok((&h + h.transpose()) * 0.5)
}

/// Eigenvectors of the `c` algebraically largest eigenvalues of `h`
/// (Ky Fan maximizer of `tr(F^T H F)` over orthonormal `F`).
pub fn update_f(h: &DMatrix<f64>, c: usize, view_id: usize) -> Result<SpectralEmbedding> {
    let n = h.nrows();
    if !h.is_square() || c == 0 || c > n {
        return Err(Error::DimensionMismatch {
            op: "update_f",
            detail: format!("H is {:?}, c = {c}", h.shape()),
        });
    }
    let (values, vectors) = top_eigenvectors(h, c, true, "update_f")?;
    if c < n && (values[c - 1] - values[c]).abs() < 1e-12 {
        log::debug!("update_f: view {view_id}: eigenvalues {c} and {} are tied", c + 1);
    }
    Ok(SpectralEmbedding { f: vectors, view_id })
}

/// Returns all eigenvalues sorted (descending if `largest`, else ascending)
/// and the eigenvectors of the first `c` of them. Ties keep the solver's order.
pub(crate) fn top_eigenvectors(
    m: &DMatrix<f64>,
    c: usize,
    largest: bool,
    context: &'static str,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::EigenFailed { context })?;
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    if largest {
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    } else {
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), c, |r, j| eig.eigenvectors[(r, order[j])]);
    Ok((values, vectors))
}

/// Scales every row of `F` to unit length.
///
/// Rows shorter than [`ZERO_ROW_NORM`] take the previous normalized row, or
/// `1/sqrt(c)` in every column when there is no previous iterate; their `P`
/// entry is set to 0 so they drop out of the `H` correction terms.
pub fn row_normalize(f: &SpectralEmbedding, prev: Option<&RowNormalizer>) -> RowNormalizer {
    let (n, c) = f.f.shape();
    let mut p = DVector::zeros(n);
    let mut fbar = f.f.clone();
    let mut degenerate_rows = Vec::new();
    for i in 0..n {
        let norm = f.f.row(i).norm();
        if norm < ZERO_ROW_NORM {
            degenerate_rows.push(i);
            match prev {
                Some(pr) if pr.fbar.shape() == (n, c) => fbar.set_row(i, &pr.fbar.row(i)),
                _ => fbar.row_mut(i).fill(1.0 / (c as f64).sqrt()),
            }
        } else {
            p[i] = 1.0 / norm;
            let mut row = fbar.row_mut(i);
            row /= norm;
        }
    }
    if !degenerate_rows.is_empty() {
        log::debug!(
            "row_normalize: view {}: {} near-zero rows replaced",
            f.view_id,
            degenerate_rows.len()
        );
    }
    RowNormalizer {
        p,
        fbar,
        degenerate_rows,
    }
}

/// `n x V x n` tensor whose lateral slice `v` is `Fbar_v Fbar_v^T`.
pub fn assemble_f_tensor(fbars: &[DMatrix<f64>]) -> Result<Tensor3> {
    let first = fbars.first().ok_or_else(|| Error::DimensionMismatch {
        op: "assemble_f_tensor",
        detail: "no views".into(),
    })?;
    let (n, c) = first.shape();
    if let Some(v) = fbars.iter().position(|m| m.shape() != (n, c)) {
        return Err(Error::DimensionMismatch {
            op: "assemble_f_tensor",
            detail: format!("view {v} is {:?}, expected {:?}", fbars[v].shape(), (n, c)),
        });
    }
    let nv = fbars.len();
    let grams = par::map_range(nv, |v| &fbars[v] * fbars[v].transpose());
    let mut t = Tensor3::zeros(n, nv, n);
    for (v, g) in grams.iter().enumerate() {
        t.set_lateral_slice(v, g)?;
    }
    Ok(t)
}

/// Value of the configured low-rank penalty, including the `rho` factor.
///
/// The convex modes use `rho * ||T||_{w,*} / N3` so that they are the
/// `gamma -> inf` limit of the t-Gamma penalty and share its proximal scale.
pub fn penalty(t: &Tensor3, cfg: &Step2Config) -> Result<f64> {
    let (n1, n2, n3) = t.dims();
    match cfg.norm_mode {
        NormMode::TGamma => Ok(cfg.rho * tensor::t_gamma_norm(t, cfg.gamma)?),
        NormMode::WeightedTnn | NormMode::Tnn => {
            Ok(cfg.rho * tensor::weighted_tnn(t, &cfg.weights(n1.min(n2))?)? / n3 as f64)
        }
    }
}

/// `1/2 ||F - T||^2 + penalty(T)`
pub fn t_objective(ften: &Tensor3, t: &Tensor3, cfg: &Step2Config) -> Result<f64> {
    let diff = tensor::frobenius_norm(&ften.sub(t)?);
    Ok(0.5 * diff * diff + penalty(t, cfg)?)
}

/// Proximal step on the tensor variable.
pub fn update_t(ften: &Tensor3, cfg: &Step2Config) -> Result<Tensor3> {
    let (n1, n2, _) = ften.dims();
    match cfg.norm_mode {
        NormMode::TGamma => tensor::t_gamma_prox(ften, cfg.rho, cfg.gamma, cfg.fixed_point),
        NormMode::WeightedTnn | NormMode::Tnn => {
            tensor::weighted_svt(ften, cfg.rho, &cfg.weights(n1.min(n2))?)
        }
    }
}

/// `-lambda sum_v tr(F_v^T A_v F_v) + 1/2 ||F - T||^2 + penalty(T)`
pub fn step2_objective(
    embeddings: &[SpectralEmbedding],
    ften: &Tensor3,
    t: &Tensor3,
    a_list: &[NormalizedAffinity],
    cfg: &Step2Config,
) -> Result<f64> {
    if embeddings.len() != a_list.len() {
        return Err(Error::DimensionMismatch {
            op: "step2_objective",
            detail: format!("{} embeddings for {} views", embeddings.len(), a_list.len()),
        });
    }
    let spectral: f64 = embeddings
        .iter()
        .zip(a_list)
        .map(|(e, a)| (e.f.transpose() * a.matrix() * &e.f).trace())
        .sum();
    Ok(-cfg.lambda * spectral + t_objective(ften, t, cfg)?)
}

#[derive(Debug, Clone)]
pub struct Step2Output {
    pub embeddings: Vec<SpectralEmbedding>,
    pub normalizers: Vec<RowNormalizer>,
    pub t: Tensor3,
    /// Objective after each outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Step2Output {
    pub fn fbars(&self) -> Vec<DMatrix<f64>> {
        self.normalizers.iter().map(|r| r.fbar.clone()).collect()
    }
}

pub fn run_step2(a_list: &[NormalizedAffinity], c: usize, cfg: &Step2Config) -> Result<Step2Output> {
    cfg.validate()?;
    let first = a_list.first().ok_or_else(|| Error::InvalidInput("no views".into()))?;
    let n = first.n();
    if let Some(v) = a_list.iter().position(|a| a.n() != n) {
        return Err(Error::DimensionMismatch {
            op: "run_step2",
            detail: format!("view {v} has {} samples, view 0 has {n}", a_list[v].n()),
        });
    }
    let nv = a_list.len();

    let mut normalizers: Option<Vec<RowNormalizer>> = None;
    let mut p_h: Option<Vec<DVector<f64>>> = None;
    let mut t: Option<Tensor3> = None;
    let mut embeddings = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iter {
        let prev_norm = normalizers.as_ref();
        let prev_t = t.as_ref();
        let prev_p = p_h.as_ref();
        let updated = par::try_map_range(nv, |v| -> Result<(SpectralEmbedding, RowNormalizer)> {
            let h = match (prev_norm, prev_t, prev_p) {
                (Some(pn), Some(tt), Some(pp)) => {
                    assemble_h(&a_list[v], &tt.lateral_slice(v), &pn[v].fbar, &pp[v], cfg.lambda)?
                }
                _ => a_list[v].matrix() * cfg.lambda,
            };
            let e = update_f(&h, c, v)?;
            let rn = row_normalize(&e, prev_norm.map(|pn| &pn[v]));
            Ok((e, rn))
        })?;
        let (e, rn): (Vec<_>, Vec<_>) = updated.into_iter().unzip();
        let w = cfg.picard_relaxation;
        p_h = Some(match p_h.take() {
            Some(old) => old.iter().zip(&rn).map(|(o, r)| o * (1.0 - w) + &r.p * w).collect(),
            None => rn.iter().map(|r| r.p.clone()).collect(),
        });
        let fbars: Vec<DMatrix<f64>> = rn.iter().map(|r| r.fbar.clone()).collect();
        let ften = assemble_f_tensor(&fbars)?;
        let t_new = update_t(&ften, cfg)?;
        let obj = step2_objective(&e, &ften, &t_new, a_list, cfg)?;

        embeddings = e;
        normalizers = Some(rn);
        t = Some(t_new);
        let done = trace
            .last()
            .is_some_and(|prev| convergence_check(*prev, obj, cfg.tol));
        trace.push(obj);
        if done {
            converged = true;
            break;
        }
    }

    Ok(Step2Output {
        embeddings,
        normalizers: normalizers.unwrap_or_default(),
        t: t.unwrap_or_else(|| Tensor3::zeros(n, nv, n)),
        trace,
        converged,
    })
}
