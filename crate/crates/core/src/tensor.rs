//! Third-order tensor algebra under the t-product.
//!
//! Tensors are dense `N1 x N2 x N3` arrays stored slice-major: frontal slice
//! `k` occupies `data[k*N1*N2 .. (k+1)*N1*N2]` and is column-major inside, so
//! entry `(i, j, k)` lives at `k*N1*N2 + j*N1 + i`. The layout is part of the
//! public contract (file round-trips rely on it).
//!
//! All Fourier-domain work uses the unnormalized forward DFT along mode 3
//! (MATLAB's `fft(X, [], 3)`); the inverse divides by `N3`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par;

/// Largest imaginary residue tolerated by [`ComplexTensor3::ifft_mode3`],
/// relative to `max(1, max |re|)`.
pub const IFFT_IMAG_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    dims: (usize, usize, usize),
    data: Vec<Complex64>,
}

fn check_dims(op: &'static str, dims: (usize, usize, usize)) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::DimensionMismatch {
            op,
            detail: format!("all dimensions must be positive, got {dims:?}"),
        });
    }
    Ok(())
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    /// Wraps a slice-major buffer. Rejects non-finite entries.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        check_dims("Tensor3::from_vec", dims)?;
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DimensionMismatch {
                op: "Tensor3::from_vec",
                detail: format!("{dims:?} needs {} entries, got {}", dims.0 * dims.1 * dims.2, data.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tensor entry at flat index {pos} is not finite"
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        n1: usize,
        n2: usize,
        n3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(n1, n2, n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    t.data[k * n1 * n2 + j * n1 + i] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn from_frontal_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::DimensionMismatch {
            op: "Tensor3::from_frontal_slices",
            detail: "no slices".into(),
        })?;
        let (n1, n2) = first.shape();
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::DimensionMismatch {
                    op: "Tensor3::from_frontal_slices",
                    detail: format!("slice {k} is {:?}, expected {:?}", s.shape(), (n1, n2)),
                });
            }
            data.extend_from_slice(s.as_slice());
        }
        Self::from_vec((n1, n2, slices.len()), data)
    }

    /// The t-identity: first frontal slice is `I_n`, the others are zero.
    pub fn t_identity(n: usize, n3: usize) -> Self {
        let mut t = Self::zeros(n, n, n3);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let (n1, n2, _) = self.dims;
        k * n1 * n2 + j * n1 + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    /// Frontal slice `X^(k)`, the `N1 x N2` matrix at third index `k`.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let (n1, n2, _) = self.dims;
        DMatrix::from_column_slice(n1, n2, &self.data[k * n1 * n2..(k + 1) * n1 * n2])
    }

    /// Lateral slice `X(:, j, :)` as an `N1 x N3` matrix.
    pub fn lateral_slice(&self, j: usize) -> DMatrix<f64> {
        let (n1, _, n3) = self.dims;
        DMatrix::from_fn(n1, n3, |i, k| self.get(i, j, k))
    }

    pub fn set_lateral_slice(&mut self, j: usize, m: &DMatrix<f64>) -> Result<()> {
        let (n1, _, n3) = self.dims;
        if m.shape() != (n1, n3) {
            return Err(Error::DimensionMismatch {
                op: "Tensor3::set_lateral_slice",
                detail: format!("got {:?}, expected {:?}", m.shape(), (n1, n3)),
            });
        }
        for k in 0..n3 {
            for i in 0..n1 {
                self.set(i, j, k, m[(i, k)]);
            }
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                op: "Tensor3::sub",
                detail: format!("{:?} vs {:?}", self.dims, other.dims),
            });
        }
        Ok(Tensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, alpha: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn fft_mode3(&self) -> ComplexTensor3 {
        fft_mode3(self)
    }
}

impl ComplexTensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            dims: (n1, n2, n3),
            data: vec![Complex64::new(0.0, 0.0); n1 * n2 * n3],
        }
    }

    pub fn from_frontal_slices(slices: &[DMatrix<Complex64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::DimensionMismatch {
            op: "ComplexTensor3::from_frontal_slices",
            detail: "no slices".into(),
        })?;
        let (n1, n2) = first.shape();
        check_dims("ComplexTensor3::from_frontal_slices", (n1, n2, slices.len()))?;
        let mut data = Vec::with_capacity(n1 * n2 * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (n1, n2) {
                return Err(Error::DimensionMismatch {
                    op: "ComplexTensor3::from_frontal_slices",
                    detail: format!("slice {k} is {:?}, expected {:?}", s.shape(), (n1, n2)),
                });
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: (n1, n2, slices.len()),
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let (n1, n2, _) = self.dims;
        self.data[k * n1 * n2 + j * n1 + i]
    }

    pub fn frontal_slice(&self, k: usize) -> DMatrix<Complex64> {
        let (n1, n2, _) = self.dims;
        DMatrix::from_column_slice(n1, n2, &self.data[k * n1 * n2..(k + 1) * n1 * n2])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn ifft_mode3(&self) -> Result<Tensor3> {
        ifft_mode3(self)
    }
}

fn planned(n3: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n3)
    } else {
        planner.plan_fft_forward(n3)
    }
}

/// Applies a length-`N3` transform to every tube, returning tubes in
/// `(j*N1 + i)` order.
fn transform_tubes(
    dims: (usize, usize, usize),
    fft: &Arc<dyn Fft<f64>>,
    load: impl Fn(usize, usize) -> Complex64 + Sync + Send,
) -> Vec<Complex64> {
    let (n1, n2, n3) = dims;
    let plane = n1 * n2;
    let tubes = par::map_range(plane, |p| {
        let mut buf: Vec<Complex64> = (0..n3).map(|k| load(p, k)).collect();
        fft.process(&mut buf);
        buf
    });
    let mut out = vec![Complex64::new(0.0, 0.0); plane * n3];
    for (p, tube) in tubes.into_iter().enumerate() {
        for (k, z) in tube.into_iter().enumerate() {
            out[k * plane + p] = z;
        }
    }
    out
}

/// Slice-wise DFT along the third index.
pub fn fft_mode3(x: &Tensor3) -> ComplexTensor3 {
    let dims = x.dims;
    let plane = dims.0 * dims.1;
    let fft = planned(dims.2, false);
    let data = transform_tubes(dims, &fft, |p, k| Complex64::new(x.data[k * plane + p], 0.0));
    ComplexTensor3 { dims, data }
}

/// Inverse of [`fft_mode3`]. Fails if the result carries an imaginary part
/// larger than [`IFFT_IMAG_LIMIT`] (relative), which means the input was not
/// conjugate-symmetric.
pub fn ifft_mode3(x: &ComplexTensor3) -> Result<Tensor3> {
    let dims = x.dims;
    let plane = dims.0 * dims.1;
    let fft = planned(dims.2, true);
    let inv_n3 = 1.0 / dims.2 as f64;
    let data = transform_tubes(dims, &fft, |p, k| x.data[k * plane + p]);
    let scale = data
        .iter()
        .fold(1.0_f64, |m, z| m.max((z.re * inv_n3).abs()));
    let residue = data.iter().fold(0.0_f64, |m, z| m.max((z.im * inv_n3).abs()));
    if residue > IFFT_IMAG_LIMIT * scale {
        return Err(Error::NumericalSymmetry {
            residue,
            limit: IFFT_IMAG_LIMIT * scale,
        });
    }
    Ok(Tensor3 {
        dims,
        data: data.into_iter().map(|z| z.re * inv_n3).collect(),
    })
}

/// Number of Fourier slices that need independent work; the rest follow by
/// conjugate symmetry (`slice N3-k = conj(slice k)`).
#[inline]
pub(crate) fn half_slices(n3: usize) -> usize {
    n3 / 2 + 1
}

#[inline]
fn is_self_conjugate(k: usize, n3: usize) -> bool {
    k == 0 || 2 * k == n3
}

pub fn t_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (a1, a2, a3) = a.dims;
    let (b1, b2, b3) = b.dims;
    if a2 != b1 || a3 != b3 {
        return Err(Error::DimensionMismatch {
            op: "t_product",
            detail: format!("{:?} * {:?}", a.dims, b.dims),
        });
    }
    let ah = fft_mode3(a);
    let bh = fft_mode3(b);
    let half = half_slices(a3).min(a3);
    let products = par::map_range(half, |k| ah.frontal_slice(k) * bh.frontal_slice(k));
    let slices = mirror_slices(products, a3);
    let out = ifft_mode3(&ComplexTensor3::from_frontal_slices(&slices)?)?;
    debug_assert_eq!(out.dims, (a1, b2, a3));
    Ok(out)
}

/// Expands the first `half_slices(n3)` Fourier slices to all `n3` by
/// conjugation.
fn mirror_slices(mut half: Vec<DMatrix<Complex64>>, n3: usize) -> Vec<DMatrix<Complex64>> {
    half.truncate(n3);
    for k in half.len()..n3 {
        let mirrored = half[n3 - k].map(|z| z.conj());
        half.push(mirrored);
    }
    half
}

/// Transposes every frontal slice and reverses the order of slices `2..N3`.
pub fn t_transpose(x: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = x.dims;
    Tensor3::from_fn(n2, n1, n3, |i, j, k| {
        let src = if k == 0 { 0 } else { n3 - k };
        x.get(j, i, src)
    })
}

/// Economy t-SVD factors `X = U * S * V^T`, with `r = min(N1, N2)`.
#[derive(Debug, Clone)]
pub struct TSVDFactors {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
    /// Fourier-domain singular values, one non-increasing vector per slice.
    pub sigma: Vec<Vec<f64>>,
}

/// Per-Fourier-slice economy SVD of a real tensor.
pub(crate) struct FourierSvd {
    pub n3: usize,
    pub u: Vec<DMatrix<Complex64>>,
    pub sigma: Vec<DVector<f64>>,
    pub v: Vec<DMatrix<Complex64>>,
}

fn slice_svd(
    m: DMatrix<Complex64>,
    slice: usize,
    real: bool,
    vectors: bool,
) -> Result<(DMatrix<Complex64>, DVector<f64>, DMatrix<Complex64>)> {
    if real {
        let re = m.map(|z| z.re);
        let svd = SVD::try_new(re, vectors, vectors, f64::EPSILON, 0)
            .ok_or(Error::SvdFailed { slice })?;
        let sigma = svd.singular_values.clone();
        if !vectors {
            return Ok((DMatrix::zeros(0, 0), sigma, DMatrix::zeros(0, 0)));
        }
        let u = svd.u.ok_or(Error::SvdFailed { slice })?;
        let vt = svd.v_t.ok_or(Error::SvdFailed { slice })?;
        Ok((
            u.map(|x| Complex64::new(x, 0.0)),
            sigma,
            vt.transpose().map(|x| Complex64::new(x, 0.0)),
        ))
    } else {
        let svd = SVD::try_new(m, vectors, vectors, f64::EPSILON, 0)
            .ok_or(Error::SvdFailed { slice })?;
        let sigma = svd.singular_values.clone();
        if !vectors {
            return Ok((DMatrix::zeros(0, 0), sigma, DMatrix::zeros(0, 0)));
        }
        let u = svd.u.ok_or(Error::SvdFailed { slice })?;
        let vt = svd.v_t.ok_or(Error::SvdFailed { slice })?;
        Ok((u, sigma, vt.adjoint()))
    }
}

pub(crate) fn fourier_svd(xh: &ComplexTensor3, vectors: bool) -> Result<FourierSvd> {
    let n3 = xh.dims.2;
    let half = half_slices(n3).min(n3);
    let parts = par::try_map_range(half, |k| {
        slice_svd(xh.frontal_slice(k), k, is_self_conjugate(k, n3), vectors)
    })?;
    let mut u = Vec::with_capacity(n3);
    let mut sigma = Vec::with_capacity(n3);
    let mut v = Vec::with_capacity(n3);
    for (uk, sk, vk) in parts {
        u.push(uk);
        sigma.push(sk);
        v.push(vk);
    }
    for k in half..n3 {
        if vectors {
            u.push(u[n3 - k].map(|z| z.conj()));
            v.push(v[n3 - k].map(|z| z.conj()));
        } else {
            u.push(DMatrix::zeros(0, 0));
            v.push(DMatrix::zeros(0, 0));
        }
        sigma.push(sigma[n3 - k].clone());
    }
    Ok(FourierSvd { n3, u, sigma, v })
}

/// Fourier-domain singular values of every frontal slice.
pub fn fourier_singular_values(x: &Tensor3) -> Result<Vec<Vec<f64>>> {
    let fs = fourier_svd(&fft_mode3(x), false)?;
    Ok(fs.sigma.into_iter().map(|s| s.as_slice().to_vec()).collect())
}

impl FourierSvd {
    /// Rebuilds a real tensor from `U_k diag(w_k) V_k^H`, with `w_k` produced
    /// from the slice's singular values. Only the first half of the slices is
    /// evaluated; the rest are conjugates.
    pub fn rebuild(
        &self,
        map: impl Fn(usize, &DVector<f64>) -> DVector<f64> + Sync + Send,
    ) -> Result<Tensor3> {
        let half = half_slices(self.n3).min(self.n3);
        let slices = par::map_range(half, |k| {
            let w = map(k, &self.sigma[k]);
            let mut us = self.u[k].clone();
            for (c, wc) in w.iter().enumerate() {
                us.column_mut(c).scale_mut(*wc);
            }
            us * self.v[k].adjoint()
        });
        let full = mirror_slices(slices, self.n3);
        ifft_mode3(&ComplexTensor3::from_frontal_slices(&full)?)
    }
}

pub fn t_svd(x: &Tensor3) -> Result<TSVDFactors> {
    let (n1, n2, n3) = x.dims;
    let r = n1.min(n2);
    let fs = fourier_svd(&fft_mode3(x), true)?;
    let s_slices: Vec<DMatrix<Complex64>> = fs
        .sigma
        .iter()
        .map(|s| DMatrix::from_diagonal(&s.map(|v| Complex64::new(v, 0.0))))
        .collect();
    let u = ifft_mode3(&ComplexTensor3::from_frontal_slices(&fs.u)?)?;
    let v = ifft_mode3(&ComplexTensor3::from_frontal_slices(&fs.v)?)?;
    let s = ifft_mode3(&ComplexTensor3::from_frontal_slices(&s_slices)?)?;
    debug_assert_eq!(u.dims, (n1, r, n3));
    Ok(TSVDFactors {
        u,
        s,
        v,
        sigma: fs.sigma.iter().map(|s| s.as_slice().to_vec()).collect(),
    })
}

pub fn frobenius_norm(x: &Tensor3) -> f64 {
    x.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum over Fourier slices of the matrix nuclear norms (no `1/N3` factor).
pub fn tensor_nuclear_norm(x: &Tensor3) -> Result<f64> {
    Ok(fourier_singular_values(x)?
        .iter()
        .map(|s| s.iter().sum::<f64>())
        .sum())
}

pub fn weighted_tnn(x: &Tensor3, w: &[f64]) -> Result<f64> {
    let r = x.dims.0.min(x.dims.1);
    if w.len() != r {
        return Err(Error::DimensionMismatch {
            op: "weighted_tnn",
            detail: format!("weight vector has length {}, expected {r}", w.len()),
        });
    }
    if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    Ok(fourier_singular_values(x)?
        .iter()
        .map(|s| s.iter().zip(w).map(|(sv, wj)| sv * wj).sum::<f64>())
        .sum())
}

/// Shape parameter of the Gamma quasi-norm; always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GammaParam(f64);

impl GammaParam {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self(gamma))
        } else {
            Err(Error::InvalidConfig {
                field: "gamma",
                reason: format!("must be a positive finite number, got {gamma}"),
            })
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GammaParam {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<GammaParam> for f64 {
    fn from(g: GammaParam) -> f64 {
        g.0
    }
}

#[inline]
fn gamma_penalty(sigma: f64, gamma: f64) -> f64 {
    (1.0 + gamma) * sigma / (gamma + sigma)
}

/// Matrix Gamma quasi-norm from a list of singular values.
pub fn gamma_norm_matrix(sigma: &[f64], g: GammaParam) -> f64 {
    sigma.iter().map(|s| gamma_penalty(*s, g.0)).sum()
}

/// Mean over Fourier slices of the slice Gamma quasi-norms.
pub fn t_gamma_norm(x: &Tensor3, g: GammaParam) -> Result<f64> {
    let n3 = x.dims.2 as f64;
    Ok(fourier_singular_values(x)?
        .iter()
        .map(|s| gamma_norm_matrix(s, g))
        .sum::<f64>()
        / n3)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
        }
    }
}

/// Scalar objective `1/2 (s - t)^2 + rho * (1+gamma) t / (gamma + t)`.
pub fn gamma_scalar_objective(s: f64, t: f64, rho: f64, gamma: f64) -> f64 {
    0.5 * (s - t) * (s - t) + rho * gamma_penalty(t, gamma)
}

/// Result of shrinking one singular value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarShrink {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Shrinks one singular value `s` by the fixed-point iteration
/// `w <- (s - rho*gamma*(1+gamma) / (gamma + w)^2)_+`, started at `w = s`.
///
/// The iterates decrease monotonically to the largest stationary point below
/// `s`. That point can lose to `w = 0` when the penalty saturates, so the
/// two are compared on the scalar objective and the smaller one is kept.
pub fn gamma_shrink_scalar(s: f64, rho: f64, g: GammaParam, opts: FixedPointOptions) -> ScalarShrink {
    let gamma = g.0;
    let c = rho * gamma * (1.0 + gamma);
    let mut w = s;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        let next = (s - c / ((gamma + w) * (gamma + w))).max(0.0);
        iterations = it + 1;
        let delta = (next - w).abs();
        w = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if w > 0.0 && gamma_scalar_objective(s, 0.0, rho, gamma) < gamma_scalar_objective(s, w, rho, gamma) {
        w = 0.0;
    }
    ScalarShrink {
        value: w,
        iterations,
        converged,
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig {
            field: "rho",
            reason: format!("must be positive and finite, got {rho}"),
        })
    }
}

/// Proximal map of `rho * ||.||_{t-gamma}`:
/// `argmin_T 1/2 ||F - T||_F^2 + rho ||T||_{t-gamma}`.
///
/// The Frobenius term and the quasi-norm both carry a `1/N3` factor in the
/// Fourier domain, so the problem splits into independent scalar problems on
/// each Fourier-domain singular value.
pub fn t_gamma_prox(f: &Tensor3, rho: f64, g: GammaParam, opts: FixedPointOptions) -> Result<Tensor3> {
    check_rho(rho)?;
    let fs = fourier_svd(&fft_mode3(f), true)?;
    let stalled = std::sync::atomic::AtomicUsize::new(0);
    let out = fs.rebuild(|_, sigma| {
        sigma.map(|s| {
            let r = gamma_shrink_scalar(s, rho, g, opts);
            if !r.converged {
                stalled.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            }
            r.value
        })
    })?;
    let stalled = stalled.into_inner();
    if stalled > 0 {
        log::debug!(
            "t_gamma_prox: {stalled} singular values hit the {}-iteration cap",
            opts.max_iter
        );
    }
    Ok(out)
}

/// Proximal map of `rho * (1/N3) * ||.||_{w,*}`: weighted singular value
/// soft-thresholding `sigma_j -> (sigma_j - rho w_j)_+` on each Fourier slice.
pub fn weighted_svt(f: &Tensor3, rho: f64, weights: &[f64]) -> Result<Tensor3> {
    check_rho(rho)?;
    let (n1, n2, _) = f.dims;
    let r = n1.min(n2);
    if weights.len() != r {
        return Err(Error::DimensionMismatch {
            op: "weighted_svt",
            detail: format!("weight vector has length {}, expected {r}", weights.len()),
        });
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let fs = fourier_svd(&fft_mode3(f), true)?;
    fs.rebuild(|_, sigma| {
        DVector::from_iterator(
            sigma.len(),
            sigma.iter().zip(weights).map(|(s, w)| (s - rho * w).max(0.0)),
        )
    })
}
