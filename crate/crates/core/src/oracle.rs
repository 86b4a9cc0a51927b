//! Slow reference implementations used to cross-check the fast paths.
//!
//! Nothing here shares code with the routines it checks: products go through
//! block-circulant matrices, neighbor rows through a bisection QP solver,
//! accuracy through permutation search and k-means through exhaustive
//! partition enumeration.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph;
use crate::tensor::{self, FixedPointOptions, GammaParam, Tensor3};

/// Minimizer of `1/2 (s-t)^2 + rho (1+gamma) t / (gamma + t)` over the grid
/// `{0, h, 2h, ...}` covering `[0, s]`. Returns `(t, objective)`.
pub fn grid_scalar_prox(s: f64, rho: f64, gamma: f64, h: f64) -> (f64, f64) {
    let steps = (s.max(0.0) / h).ceil() as usize;
    let mut best = (0.0, tensor::gamma_scalar_objective(s, 0.0, rho, gamma));
    for i in 1..=steps {
        let t = (i as f64 * h).min(s);
        let f = tensor::gamma_scalar_objective(s, t, rho, gamma);
        if f < best.1 {
            best = (t, f);
        }
    }
    best
}

/// `bcirc(A)` of size `(n1 n3) x (n2 n3)`.
pub fn block_circulant(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    let mut m = DMatrix::zeros(n1 * n3, n2 * n3);
    for bi in 0..n3 {
        for bj in 0..n3 {
            let k = (bi + n3 - bj) % n3;
            for i in 0..n1 {
                for j in 0..n2 {
                    m[(bi * n1 + i, bj * n2 + j)] = a.get(i, j, k);
                }
            }
        }
    }
    m
}

/// t-product as `fold(bcirc(A) unfold(B))`.
pub fn t_product_circulant(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (n1, _, n3) = a.dims();
    let (n2b, m, _) = b.dims();
    let mut unfold = DMatrix::zeros(n2b * n3, m);
    for k in 0..n3 {
        for i in 0..n2b {
            for j in 0..m {
                unfold[(k * n2b + i, j)] = b.get(i, j, k);
            }
        }
    }
    let prod = block_circulant(a) * unfold;
    Tensor3::from_fn(n1, m, n3, |i, j, k| prod[(k * n1 + i, j)])
}

/// Naive `O(n3^2)` DFT along the third mode; returns `(re, im)` tensors.
pub fn dft_mode3(x: &Tensor3) -> (Tensor3, Tensor3) {
    let (n1, n2, n3) = x.dims();
    let ang = |k: usize, t: usize| -2.0 * std::f64::consts::PI * ((k * t) % n3) as f64 / n3 as f64;
    let re = Tensor3::from_fn(n1, n2, n3, |i, j, k| {
        (0..n3).map(|t| x.get(i, j, t) * ang(k, t).cos()).sum()
    });
    let im = Tensor3::from_fn(n1, n2, n3, |i, j, k| {
        (0..n3).map(|t| x.get(i, j, t) * ang(k, t).sin()).sum()
    });
    (re, im)
}

/// `argmin_{s in simplex} sum_j s_j d_j + gamma ||s||^2`, i.e. the Euclidean
/// projection of `-d / (2 gamma)` onto the simplex, found by bisection on the
/// shift `eta` in `s_j = (v_j + eta)_+`.
pub fn simplex_qp(d: &[f64], gamma: f64) -> Vec<f64> {
    assert!(gamma > 0.0 && !d.is_empty());
    let v: Vec<f64> = d.iter().map(|x| -x / (2.0 * gamma)).collect();
    let mass = |eta: f64| v.iter().map(|x| (x + eta).max(0.0)).sum::<f64>();
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (-vmax, -vmax + 1.0);
    while mass(hi) < 1.0 {
        hi += 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    v.iter().map(|x| (x + eta).max(0.0)).collect()
}

/// Dense adaptive-neighbor weights for row `i` using the QP oracle with the
/// supplied `gamma`, self excluded.
pub fn adaptive_row_qp(d: &DMatrix<f64>, i: usize, gamma: f64) -> Vec<f64> {
    let n = d.nrows();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let dist: Vec<f64> = others.iter().map(|&j| d[(i, j)]).collect();
    let s = simplex_qp(&dist, gamma);
    let mut row = vec![0.0; n];
    for (j, w) in others.iter().zip(s) {
        row[*j] = w;
    }
    row
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn dense(labels: &[usize]) -> (usize, Vec<usize>) {
    let mut vals = labels.to_vec();
    vals.sort_unstable();
    vals.dedup();
    (vals.len(), labels.iter().map(|l| vals.binary_search(l).unwrap()).collect())
}

/// Accuracy by trying every one-to-one relabeling. Exponential; keep the
/// number of clusters small.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let (cp, p) = dense(pred);
    let (ct, t) = dense(truth);
    let size = cp.max(ct);
    let best = permutations(size)
        .into_iter()
        .map(|perm| p.iter().zip(&t).filter(|(a, b)| perm[**a] == **b).count())
        .max()
        .unwrap_or(0);
    if pred.is_empty() {
        1.0
    } else {
        best as f64 / pred.len() as f64
    }
}

/// Pair counts over all unordered pairs: `(same/same, same/diff, diff/same,
/// diff/diff)` where the first position refers to `pred`.
pub fn pair_counts(pred: &[usize], truth: &[usize]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let sp = pred[i] == pred[j];
            let st = truth[i] == truth[j];
            c[match (sp, st) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            }] += 1;
        }
    }
    c
}

/// ARI from explicit pair counts. Degenerate denominators give 1 when the two
/// partitions agree on every pair and 0 otherwise.
pub fn pair_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let [a, b, c, d] = pair_counts(pred, truth).map(|v| v as i128);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0 {
        return if b == 0 && c == 0 { 1.0 } else { 0.0 };
    }
    (2 * (a * d - b * c)) as f64 / den as f64
}

/// `(precision, recall, f1)` from explicit pair counts.
pub fn pair_prf(pred: &[usize], truth: &[usize]) -> (f64, f64, f64) {
    let [a, b, c, _] = pair_counts(pred, truth).map(|v| v as f64);
    if a + b == 0.0 && a + c == 0.0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if a + b > 0.0 { a / (a + b) } else { 0.0 };
    let r = if a + c > 0.0 { a / (a + c) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Components of the undirected graph with an edge wherever `w_ij > eps` or
/// `w_ji > eps`, by depth-first search.
pub fn dfs_components(w: &DMatrix<f64>, eps: f64) -> usize {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && (w[(i, j)] > eps || w[(j, i)] > eps) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Smallest within-cluster sum of squares over every partition of the
/// columns of `points` into exactly `c` non-empty groups.
pub fn exhaustive_kmeans(points: &DMatrix<f64>, c: usize) -> f64 {
    let n = points.ncols();
    assert!(c >= 1 && c <= n && n <= 12);
    let sse = |assign: &[usize]| -> f64 {
        (0..c)
            .map(|g| {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == g).collect();
                let mut mean = nalgebra::DVector::zeros(points.nrows());
                for &i in &members {
                    mean += points.column(i);
                }
                mean /= members.len() as f64;
                members.iter().map(|&i| (points.column(i) - &mean).norm_squared()).sum::<f64>()
            })
            .sum()
    };
    // restricted growth strings
    fn rec(i: usize, used: usize, a: &mut Vec<usize>, n: usize, c: usize, best: &mut f64, f: &dyn Fn(&[usize]) -> f64) {
        if n - i < c - used {
            return;
        }
        if i == n {
            *best = best.min(f(a));
            return;
        }
        for g in 0..=(used.min(c - 1)) {
            a[i] = g;
            rec(i + 1, used.max(g + 1), a, n, c, best, f);
        }
    }
    let mut best = f64::INFINITY;
    rec(0, 0, &mut vec![0; n], n, c, &mut best, &sse);
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} :: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, max_dim: usize) -> Tensor3 {
    let dims = (
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
        rng.random_range(1..=max_dim),
    );
    Tensor3::from_fn(dims.0, dims.1, dims.2, |_, _, _| rng.random_range(-1.0..1.0))
}

fn prox_objective(f: &Tensor3, x: &Tensor3, rho: f64, g: GammaParam) -> f64 {
    let r = tensor::frobenius_norm(&f.sub(x).expect("same dims"));
    0.5 * r * r + rho * tensor::t_gamma_norm(x, g).expect("finite")
}

/// Runs the proximal-operator and product checks against the oracles above.
pub fn prox_check(seed: u64, scalar_cases: usize, tensor_cases: usize) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let opts = FixedPointOptions::default();

    // scalar prox against a 1e-4 grid
    let h = 1e-4;
    let mut worst_gap = 0.0_f64;
    let mut worst_case = String::new();
    for _ in 0..scalar_cases {
        let s = rng.random_range(0.0..3.0);
        let rho = rng.random_range(0.01..1.0);
        let gamma = 10f64.powf(rng.random_range(-2.0..2.0));
        let ours = tensor::gamma_shrink_scalar(s, rho, GammaParam::new(gamma).unwrap(), opts).value;
        let f_ours = tensor::gamma_scalar_objective(s, ours, rho, gamma);
        let (_, f_grid) = grid_scalar_prox(s, rho, gamma, h);
        let gap = f_ours - f_grid;
        if gap > worst_gap {
            worst_gap = gap;
            worst_case = format!(" at s={s:.4} rho={rho:.4} gamma={gamma:.4}");
        }
    }
    out.push(CheckOutcome::new(
        "scalar-prox-vs-grid",
        worst_gap <= 1e-9,
        format!("{scalar_cases} cases, worst objective excess {worst_gap:.3e}{worst_case}"),
    ));

    // tensor prox never loses to its input, zero, or nearby perturbations
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..tensor_cases {
        let f = random_tensor(&mut rng, 6);
        let rho = rng.random_range(0.01..1.0);
        let g = GammaParam::new(10f64.powf(rng.random_range(-2.0..2.0))).unwrap();
        let x = match tensor::t_gamma_prox(&f, rho, g, opts) {
            Ok(x) => x,
            Err(e) => {
                out.push(CheckOutcome::new("tensor-prox-descent", false, e.to_string()));
                return out;
            }
        };
        let base = prox_objective(&f, &x, rho, g);
        let (n1, n2, n3) = f.dims();
        let mut rivals = vec![f.clone(), Tensor3::zeros(n1, n2, n3)];
        for _ in 0..5 {
            let eps = Tensor3::from_fn(n1, n2, n3, |_, _, _| rng.random_range(-1e-3..1e-3));
            rivals.push(x.sub(&eps.scale(-1.0)).unwrap());
        }
        for r in rivals {
            worst = worst.max(base - prox_objective(&f, &r, rho, g));
        }
    }
    out.push(CheckOutcome::new(
        "tensor-prox-descent",
        worst <= 1e-9,
        format!("{tensor_cases} tensors, worst excess over a rival {worst:.3e}"),
    ));

    // t-product via FFT against block-circulant multiplication
    let mut worst = 0.0_f64;
    for _ in 0..tensor_cases {
        let a = random_tensor(&mut rng, 5);
        let (_, n2, n3) = a.dims();
        let m = rng.random_range(1..=5);
        let b = Tensor3::from_fn(n2, m, n3, |_, _, _| rng.random_range(-1.0..1.0));
        let fast = tensor::t_product(&a, &b).unwrap();
        let slow = t_product_circulant(&a, &b);
        worst = worst.max(tensor::frobenius_norm(&fast.sub(&slow).unwrap()));
    }
    out.push(CheckOutcome::new(
        "t-product-vs-circulant",
        worst <= 1e-10,
        format!("{tensor_cases} pairs, worst residual {worst:.3e}"),
    ));

    // adaptive neighbor rows against the QP solution
    let mut worst = 0.0_f64;
    for _ in 0..tensor_cases {
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..n);
        let x = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
        let view = graph::ViewMatrix::new(x, 0).unwrap();
        let d = graph::pairwise_sq_dist(&view);
        let (s, duals) = graph::adaptive_neighbor_graph(&view, k).unwrap();
        for i in 0..n {
            if duals.gamma_row[i] <= 0.0 {
                continue;
            }
            let qp = adaptive_row_qp(&d, i, duals.gamma_row[i]);
            for (j, v) in qp.iter().enumerate() {
                worst = worst.max((s.get(i, j) - v).abs());
            }
        }
    }
    out.push(CheckOutcome::new(
        "adaptive-rows-vs-qp",
        worst <= 1e-8,
        format!("{tensor_cases} graphs, worst entry gap {worst:.3e}"),
    ));
    out
}
