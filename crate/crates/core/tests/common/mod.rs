#![allow(dead_code)]

use cgmvc_core::tensor::Tensor3;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tensor_dims(n1: usize, n2: usize, n3: usize) -> impl Strategy<Value = Tensor3> {
    prop::collection::vec(-1.0f64..1.0, n1 * n2 * n3)
        .prop_map(move |d| Tensor3::from_vec((n1, n2, n3), d).unwrap())
}

pub fn tensor(max: usize) -> impl Strategy<Value = Tensor3> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(a, b, c)| tensor_dims(a, b, c))
}

pub fn random_tensor(n1: usize, n2: usize, n3: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor3::from_fn(n1, n2, n3, |_, _, _| rng.random_range(-1.0..1.0))
}

pub fn rel_err(a: &Tensor3, b: &Tensor3) -> f64 {
    let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    d / nb.max(1e-300)
}

/// `n` points per cluster around well separated centers, samples as columns.
pub fn blobs(sizes: &[usize], dim: usize, spread: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    for (c, &sz) in sizes.iter().enumerate() {
        for _ in 0..sz {
            for r in 0..dim {
                let center = if r == c % dim { 10.0 * (1 + c / dim) as f64 } else { 0.0 };
                x[(r, col)] = center + spread * rng.random_range(-1.0..1.0);
            }
            labels.push(c);
            col += 1;
        }
    }
    (x, labels)
}

/// Unit rows, one dominant coordinate per block plus a little noise.
pub fn block_fbar(sizes: &[usize], noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = sizes.len();
    let n: usize = sizes.iter().sum();
    let mut f = DMatrix::zeros(n, c);
    let mut row = 0;
    for (b, &sz) in sizes.iter().enumerate() {
        for _ in 0..sz {
            for j in 0..c {
                f[(row, j)] = if j == b { 1.0 } else { noise * rng.random_range(-1.0..1.0) };
            }
            let nr = f.row(row).norm();
            f.row_mut(row).scale_mut(1.0 / nr);
            row += 1;
        }
    }
    f
}
