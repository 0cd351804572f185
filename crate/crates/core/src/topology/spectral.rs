//! Spectral radius of sparse coupling matrices.
//!
//! The primary estimator is a two-dimensional Krylov (Arnoldi-2) power
//! iteration: Ritz values of `M` restricted to `span{v, Mv}` converge to the
//! dominant eigenvalue, including a complex-conjugate pair or a `±λ` pair,
//! where plain power iteration oscillates. The estimate is bounded from above
//! by a Collatz–Wielandt bound on `|M|`. Small matrices fall back to a dense
//! Schur eigensolve when the iteration does not settle.

use nalgebra::DMatrix;

use super::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SpectralConfig {
    pub max_iterations: usize,
    /// Relative change of the Ritz estimate between iterations.
    pub tolerance: f64,
    /// Largest `n` for which a dense eigensolve is attempted on non-convergence.
    pub dense_limit: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-10, dense_limit: 1_000 }
    }
}

pub fn spectral_radius(m: &CsrMatrix) -> Result<f64> {
    spectral_radius_with(m, &SpectralConfig::default())
}

pub fn spectral_radius_with(m: &CsrMatrix, config: &SpectralConfig) -> Result<f64> {
    if m.n() == 0 {
        return Err(Error::EmptyNetwork);
    }
    if m.count_nonzero() == 0 {
        return Ok(0.0);
    }
    let bound = perron_upper_bound(m, 200);
    match krylov_power_iteration(m, config) {
        Ok(est) if est <= bound * (1.0 + 1e-9) => Ok(est),
        Ok(est) | Err(est) => {
            if m.n() <= config.dense_limit {
                Ok(dense_spectral_radius(&m.to_dense()))
            } else {
                Err(Error::NoConvergence { iterations: config.max_iterations, last_estimate: est })
            }
        }
    }
}

/// Largest eigenvalue magnitude from a dense real Schur decomposition.
pub fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
    }
}

/// Collatz–Wielandt upper bound on `ρ(|M|) ≥ ρ(M)`.
///
/// Iterates the positive matrix `|M| + I` so the iterate never loses
/// positivity; `max_i ((|M|+I)x)_i / x_i − 1` bounds `ρ(|M|)` for any `x > 0`.
pub fn perron_upper_bound(m: &CsrMatrix, iterations: usize) -> f64 {
    let n = m.n();
    let mut x = vec![1.0; n];
    let mut y = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..iterations.max(1) {
        m.abs_matvec(&x, &mut y);
        let mut ratio = 0.0f64;
        for i in 0..n {
            y[i] += x[i];
            ratio = ratio.max(y[i] / x[i]);
        }
        best = best.min(ratio - 1.0);
        let norm = y.iter().fold(0.0f64, |a, v| a.max(*v));
        for i in 0..n {
            x[i] = y[i] / norm;
        }
    }
    best.max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest eigenvalue magnitude of a real 2x2 matrix `[[a, b], [c, d]]`.
fn eig2_max_abs(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (half_tr + s).abs().max((half_tr - s).abs())
    } else {
        det.max(0.0).sqrt()
    }
}

/// Returns `Ok(estimate)` on convergence, `Err(last_estimate)` otherwise.
fn krylov_power_iteration(m: &CsrMatrix, config: &SpectralConfig) -> std::result::Result<f64, f64> {
    let n = m.n();
    // Deterministic start vector with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut q2 = vec![0.0; n];
    m.matvec(&v, &mut w1);
    let mut prev = f64::NAN;
    let mut estimate = 0.0;

    for _ in 0..config.max_iterations {
        let w1_norm = norm(&w1);
        if w1_norm == 0.0 {
            // The iterate fell into the null space; only nilpotent parts remain.
            return Ok(0.0);
        }
        m.matvec(&w1, &mut w2);

        let h11 = dot(&v, &w1);
        for i in 0..n {
            q2[i] = w1[i] - h11 * v[i];
        }
        let p_norm = norm(&q2);
        let residual;
        if p_norm <= 1e-14 * w1_norm {
            estimate = h11.abs();
            residual = p_norm;
        } else {
            q2.iter_mut().for_each(|x| *x /= p_norm);
            // M q2 = (w2 - h11 w1) / p_norm
            let mq2: Vec<f64> = w2.iter().zip(&w1).map(|(a, b)| (a - h11 * b) / p_norm).collect();
            let h21 = p_norm;
            let h12 = dot(&v, &mq2);
            let h22 = dot(&q2, &mq2);
            estimate = eig2_max_abs(h11, h12, h21, h22);
            let r: Vec<f64> = (0..n).map(|i| mq2[i] - h12 * v[i] - h22 * q2[i]).collect();
            residual = norm(&r);
        }

        let settled = (estimate - prev).abs() <= config.tolerance * estimate.max(f64::MIN_POSITIVE);
        if settled && residual <= 1e-8 * estimate.max(f64::MIN_POSITIVE) {
            return Ok(estimate);
        }
        prev = estimate;

        for i in 0..n {
            v[i] = w1[i] / w1_norm;
            w1[i] = w2[i] / w1_norm;
        }
    }
    Err(estimate)
}
