//! Coupling matrix `M` and input matrix `W_in` construction.

mod connectome;
pub mod io;
mod sparse;
mod spectral;

pub use connectome::{
    ingest_connectome, synthetic_connectome, ConnectomeEdgeList, Edge, SyntheticConnectomeSpec,
};
pub use sparse::CsrMatrix;
pub use spectral::{
    dense_spectral_radius, perron_upper_bound, spectral_radius_with, SpectralConfig,
};

use nalgebra::DMatrix;
use rand::Rng;

use crate::seeding::rng_from_seed;
use crate::{Error, Result};

/// Where a coupling matrix came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    ErdosRenyi { seed: u64, sparsity: f64 },
    Connectome { source_id: String, synapse_threshold: u64 },
    /// Hand-built matrices (tests, imported triplets).
    Explicit,
}

/// Reservoir coupling matrix together with its spectral radius.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    entries: CsrMatrix,
    spectral_radius: f64,
    provenance: Provenance,
    /// Source node labels in index order (connectome matrices only).
    labels: Vec<String>,
}

impl AdjacencyMatrix {
    /// Wraps `entries`, computing its spectral radius.
    pub fn new(entries: CsrMatrix, provenance: Provenance) -> Result<Self> {
        let spectral_radius = spectral::spectral_radius(&entries)?;
        Ok(Self { entries, spectral_radius, provenance, labels: Vec::new() })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(CsrMatrix::from_dense(m, 0.0), Provenance::Explicit)
    }

    pub(crate) fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn n(&self) -> usize {
        self.entries.n()
    }

    pub fn entries(&self) -> &CsrMatrix {
        &self.entries
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.entries.to_dense()
    }
}

/// Recomputes `max |λ|` of the matrix entries.
pub fn spectral_radius(m: &AdjacencyMatrix) -> Result<f64> {
    spectral::spectral_radius(&m.entries)
}

/// Weighted Erdős–Rényi matrix: every entry, diagonal included, is present
/// with probability `sparsity` and carries a weight uniform on `[-1, 1]`.
/// The result is not rescaled.
pub fn generate_erdos_renyi(n: usize, sparsity: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::invalid("sparsity", format!("{sparsity} is not a probability")));
    }
    let mut rng = rng_from_seed(seed);
    let mut triplets = Vec::with_capacity((sparsity * (n * n) as f64 * 1.1) as usize + 4);
    for i in 0..n {
        for j in 0..n {
            if rng.random::<f64>() < sparsity {
                triplets.push((i, j, rng.random_range(-1.0..=1.0)));
            }
        }
    }
    AdjacencyMatrix::new(
        CsrMatrix::from_triplets(n, triplets),
        Provenance::ErdosRenyi { seed, sparsity },
    )
}

/// Rescales `m` so that its spectral radius becomes `target_rho`.
pub fn scale_to_spectral_radius(m: &AdjacencyMatrix, target_rho: f64) -> Result<AdjacencyMatrix> {
    if !(target_rho >= 0.0) || !target_rho.is_finite() {
        return Err(Error::invalid("rho", format!("{target_rho} must be finite and nonnegative")));
    }
    if target_rho == 0.0 {
        return Ok(AdjacencyMatrix { entries: m.entries.scaled(0.0), spectral_radius: 0.0, ..m.clone() });
    }
    if m.spectral_radius == 0.0 {
        return Err(Error::Unscalable { target: target_rho });
    }
    let factor = target_rho / m.spectral_radius;
    Ok(AdjacencyMatrix {
        entries: m.entries.scaled(factor),
        spectral_radius: target_rho,
        ..m.clone()
    })
}

/// Input matrix with exactly one nonzero entry per row.
#[derive(Clone, Debug, PartialEq)]
pub struct InputMatrix {
    d: usize,
    columns: Vec<usize>,
    values: Vec<f64>,
}

impl InputMatrix {
    pub fn from_parts(d: usize, columns: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if d == 0 || columns.is_empty() {
            return Err(Error::invalid("w_in", "needs at least one row and one column"));
        }
        if columns.len() != values.len() {
            return Err(Error::Shape(format!("{} columns for {} values", columns.len(), values.len())));
        }
        if let Some(c) = columns.iter().find(|c| **c >= d) {
            return Err(Error::Shape(format!("column {c} outside input dimension {d}")));
        }
        Ok(Self { d, columns, values })
    }

    /// All-zero input coupling (disconnects the reservoir from its input).
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { d, columns: vec![0; n], values: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.columns.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Column of the single nonzero entry in each row.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `y[i] = scale * (W_in u)[i]`
    #[inline]
    pub fn apply_scaled(&self, u: &[f64], scale: f64, y: &mut [f64]) {
        for ((yi, &c), &w) in y.iter_mut().zip(&self.columns).zip(&self.values) {
            *yi = scale * w * u[c];
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.d);
        for (i, (&c, &w)) in self.columns.iter().zip(&self.values).enumerate() {
            m[(i, c)] = w;
        }
        m
    }
}

/// Each row receives one weight uniform on `[-1, 1]` in a uniformly chosen column.
pub fn generate_input_matrix(n: usize, d: usize, seed: u64) -> Result<InputMatrix> {
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    if d == 0 {
        return Err(Error::invalid("d", "input dimension must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut columns = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        columns.push(rng.random_range(0..d));
        values.push(rng.random_range(-1.0..=1.0));
    }
    Ok(InputMatrix { d, columns, values })
}
