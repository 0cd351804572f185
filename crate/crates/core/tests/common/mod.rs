#![allow(dead_code)]

use mfrc_core::topology::AdjacencyMatrix;
use nalgebra::DMatrix;
use ndarray::Array2;
use ndarray_linalg::{EigVals, Inverse};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Largest eigenvalue modulus via LAPACK `geev`.
pub fn lapack_spectral_radius(m: &DMatrix<f64>) -> f64 {
    let eig = to_ndarray(m).eigvals().expect("geev");
    eig.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn lapack_radius_of(m: &AdjacencyMatrix) -> f64 {
    lapack_spectral_radius(&m.to_dense())
}

/// `Y Xᵀ (X Xᵀ + βI)⁻¹` with an explicit LAPACK inverse.
pub fn explicit_ridge(x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let gram = x * x.transpose() + DMatrix::identity(x.nrows(), x.nrows()) * beta;
    let inv = to_ndarray(&gram).inv().expect("getri");
    let inv = DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| inv[(i, j)]);
    y * x.transpose() * inv
}

pub fn random_dense(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense matrix with roughly `density` nonzeros, uniform in [-1, 1].
pub fn random_sparse_dense(n: usize, density: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| if rng.random::<f64>() < density { rng.random_range(-1.0..1.0) } else { 0.0 })
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}
