//! Readout training: squared features, harvesting, blending, ridge regression.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::dynamics::{drive_listening_observed, ReservoirParams, ReservoirTrajectory};
use crate::tasks::{DriveSignal, OrbitLabel};
use crate::topology::{scale_to_spectral_radius, AdjacencyMatrix, CsrMatrix, InputMatrix, Provenance};
use crate::{Error, Result};

/// `q(r) = (r, r²)`.
pub fn apply_q(r: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * r.len());
    out.extend_from_slice(r);
    out.extend(r.iter().map(|v| v * v));
    out
}

/// Harvested features: column `k` is `q(r(t_listen + kτ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: DMatrix<f64>,
    pub window: (f64, f64),
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.columns.nrows() / 2
    }
    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

/// Drive values on the harvest grid, one column per step.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMatrix {
    pub columns: DMatrix<f64>,
}

impl TargetMatrix {
    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }
}

/// Collects `(q(r), u)` columns for steps `listen..=train` while a listening run streams by.
struct Harvester {
    first: usize,
    last: usize,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Harvester {
    fn new(params: &ReservoirParams) -> Self {
        let cols = params.train_steps() - params.listen_steps() + 1;
        Self {
            first: params.listen_steps(),
            last: params.train_steps(),
            x: DMatrix::zeros(2 * params.n, cols),
            y: DMatrix::zeros(params.d, cols),
        }
    }

    fn observe(&mut self, step: usize, r: &[f64], signal: &DriveSignal) {
        if step < self.first || step > self.last {
            return;
        }
        let c = step - self.first;
        let n = r.len();
        let mut col = self.x.column_mut(c);
        for i in 0..n {
            col[i] = r[i];
            col[n + i] = r[i] * r[i];
        }
        let u = signal.samples()[step];
        self.y[(0, c)] = u[0];
        self.y[(1, c)] = u[1];
    }

    fn finish(self, params: &ReservoirParams) -> (FeatureMatrix, TargetMatrix) {
        (
            FeatureMatrix { columns: self.x, window: (params.t_listen(), params.t_train()) },
            TargetMatrix { columns: self.y },
        )
    }
}

/// Features and targets on the inclusive grid `t_listen, …, t_train`.
pub fn harvest(
    traj: &ReservoirTrajectory,
    signal: &DriveSignal,
    params: &ReservoirParams,
) -> Result<(FeatureMatrix, TargetMatrix)> {
    let first = traj
        .index_of(params.t_listen())
        .ok_or_else(|| Error::Range(format!("trajectory does not reach t_listen = {}", params.t_listen())))?;
    let last = traj
        .index_of(params.t_train())
        .ok_or_else(|| Error::Range(format!("trajectory does not reach t_train = {}", params.t_train())))?;
    if traj.n() != params.n {
        return Err(Error::Shape(format!("trajectory has {} neurons, expected {}", traj.n(), params.n)));
    }
    let mut x = DMatrix::zeros(2 * params.n, last - first + 1);
    let mut y = DMatrix::zeros(params.d, last - first + 1);
    for (c, k) in (first..=last).enumerate() {
        let q = apply_q(traj.row(k));
        x.column_mut(c).copy_from_slice(&q);
        let u = signal.eval(traj.time(k));
        y[(0, c)] = u[0];
        y[(1, c)] = u[1];
    }
    Ok((
        FeatureMatrix { columns: x, window: (params.t_listen(), params.t_train()) },
        TargetMatrix { columns: y },
    ))
}

/// Column-wise concatenation `[x1 | x2]`, `[y1 | y2]`.
pub fn blend(
    x1: &FeatureMatrix,
    x2: &FeatureMatrix,
    y1: &TargetMatrix,
    y2: &TargetMatrix,
) -> Result<(FeatureMatrix, TargetMatrix)> {
    if x1.ncols() == 0 || x2.ncols() == 0 {
        return Err(Error::Shape("cannot blend an empty harvest".into()));
    }
    if x1.ncols() != y1.ncols() || x2.ncols() != y2.ncols() {
        return Err(Error::Shape("feature and target column counts differ".into()));
    }
    if x1.columns.nrows() != x2.columns.nrows() || y1.columns.nrows() != y2.columns.nrows() {
        return Err(Error::Shape("row counts differ between the blended runs".into()));
    }
    let concat = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
        out.columns_mut(0, a.ncols()).copy_from(a);
        out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
        out
    };
    Ok((
        FeatureMatrix { columns: concat(&x1.columns, &x2.columns), window: x1.window },
        TargetMatrix { columns: concat(&y1.columns, &y2.columns) },
    ))
}

/// Trained readout `W_out` (`d × 2n`), applied as `W_out q(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutMatrix {
    d: usize,
    n: usize,
    /// Row-major `d × 2n`.
    data: Vec<f64>,
}

impl ReadoutMatrix {
    pub fn zeros(d: usize, n: usize) -> Self {
        Self { d, n, data: vec![0.0; d * 2 * n] }
    }

    pub fn from_dense(w: &DMatrix<f64>) -> Result<Self> {
        if !w.ncols().is_multiple_of(2) {
            return Err(Error::Shape(format!("readout has {} columns, expected 2n", w.ncols())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("readout has non-finite entries".into()));
        }
        let (d, cols) = w.shape();
        let mut data = Vec::with_capacity(d * cols);
        for i in 0..d {
            data.extend(w.row(i).iter());
        }
        Ok(Self { d, n: cols / 2, data })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, 2 * self.n, &self.data)
    }

    /// `out = W_out q(r)` without materialising `q(r)`.
    #[inline]
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.data[k * 2 * n..(k + 1) * 2 * n];
            let (lin, sq) = row.split_at(n);
            let mut acc = 0.0;
            for i in 0..n {
                acc += r[i] * (lin[i] + sq[i] * r[i]);
            }
            *o = acc;
        }
    }
}

/// Relative residual `‖W G − B‖_F / ‖B‖_F` of a ridge solve.
pub fn ridge_residual(w: &DMatrix<f64>, gram: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    let r = (w * gram - rhs).norm();
    let scale = rhs.norm();
    if scale == 0.0 { r } else { r / scale }
}

/// Residual bound enforced on every ridge solve.
pub const RIDGE_RESIDUAL_TOLERANCE: f64 = 1e-8;

/// `W_out = Y Xᵀ (X Xᵀ + βI)⁻¹`, solved by Cholesky with a rank-revealing
/// fallback and one step of iterative refinement.
pub fn ridge_regression(x: &FeatureMatrix, y: &TargetMatrix, beta: f64) -> Result<ReadoutMatrix> {
    ridge_solve(&x.columns, &y.columns, beta).and_then(|w| ReadoutMatrix::from_dense(&w))
}

pub(crate) fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("X has {} columns, Y has {}", x.ncols(), y.ncols())));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid("beta", format!("{beta} must be nonnegative")));
    }
    let mut gram = x * x.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += beta;
    }
    let rhs = y * x.transpose();
    let rhs_t = rhs.transpose();

    let solve: Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64>> = match gram.clone().cholesky() {
        Some(chol) => Box::new(move |b| chol.solve(b)),
        None => {
            let svd = gram.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let cutoff = smax * gram.nrows() as f64 * f64::EPSILON;
            if svd.singular_values.iter().any(|s| *s <= cutoff) {
                return Err(Error::Singular);
            }
            Box::new(move |b| svd.solve(b, cutoff).expect("U and V were computed"))
        }
    };

    // G symmetric: W G = B  <=>  G Wᵀ = Bᵀ.
    let mut wt = solve(&rhs_t);
    let correction = solve(&(&rhs_t - &gram * &wt));
    wt += correction;
    let w = wt.transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let residual = ridge_residual(&w, &gram, &rhs);
    if residual > RIDGE_RESIDUAL_TOLERANCE {
        return Err(Error::Residual { residual });
    }
    Ok(w)
}

/// A reservoir with frozen `(M, W_in, W_out)` and the listening end states
/// used to start each attractor's prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedReservoir {
    m: AdjacencyMatrix,
    w_in: InputMatrix,
    w_out: ReadoutMatrix,
    params: ReservoirParams,
    seed_states: Vec<(OrbitLabel, Vec<f64>)>,
}

impl TrainedReservoir {
    pub fn new(
        m: AdjacencyMatrix,
        w_in: InputMatrix,
        w_out: ReadoutMatrix,
        params: ReservoirParams,
        seed_states: Vec<(OrbitLabel, Vec<f64>)>,
    ) -> Result<Self> {
        params.validate()?;
        if m.n() != params.n || w_in.n() != params.n || w_out.n() != params.n || w_out.d() != params.d {
            return Err(Error::Shape("M, W_in and W_out do not agree with the reservoir size".into()));
        }
        if seed_states.is_empty() || seed_states.iter().any(|(_, s)| s.len() != params.n) {
            return Err(Error::Shape("need at least one seed state of length n".into()));
        }
        Ok(Self { m, w_in, w_out, params, seed_states })
    }

    pub fn m(&self) -> &AdjacencyMatrix {
        &self.m
    }
    pub fn w_in(&self) -> &InputMatrix {
        &self.w_in
    }
    pub fn w_out(&self) -> &ReadoutMatrix {
        &self.w_out
    }
    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }
    pub fn seed_states(&self) -> &[(OrbitLabel, Vec<f64>)] {
        &self.seed_states
    }

    pub fn seed_state(&self, label: OrbitLabel) -> Option<&[f64]> {
        self.seed_states.iter().find(|(l, _)| *l == label).map(|(_, s)| s.as_slice())
    }

    /// Same reservoir with a different readout (used for what-if analysis).
    pub fn with_readout(&self, w_out: ReadoutMatrix) -> Result<Self> {
        Self::new(self.m.clone(), self.w_in.clone(), w_out, self.params.clone(), self.seed_states.clone())
    }
}

/// Listens to each signal from `r(0) = 0`, harvests both windows, blends them
/// and solves for `W_out`. `m` is rescaled to `params.rho` first.
pub fn train_multifunctional(
    m: &AdjacencyMatrix,
    w_in: &InputMatrix,
    params: &ReservoirParams,
    u1: &DriveSignal,
    u2: &DriveSignal,
) -> Result<TrainedReservoir> {
    params.validate()?;
    let m = if m.spectral_radius() == params.rho { m.clone() } else { scale_to_spectral_radius(m, params.rho)? };

    let listen = |u: &DriveSignal| -> Result<(FeatureMatrix, TargetMatrix, Vec<f64>)> {
        let mut h = Harvester::new(params);
        let last = drive_listening_observed(&m, w_in, params, u, |k, r| h.observe(k, r, u))?;
        let (x, y) = h.finish(params);
        Ok((x, y, last))
    };
    let (x1, y1, r1) = listen(u1)?;
    let (x2, y2, r2) = listen(u2)?;
    let (x, y) = blend(&x1, &x2, &y1, &y2)?;
    drop((x1, x2));
    let w_out = ridge_regression(&x, &y, params.beta)?;
    TrainedReservoir::new(
        m,
        w_in.clone(),
        w_out,
        params.clone(),
        vec![(u1.spec.label, r1), (u2.spec.label, r2)],
    )
}

fn write_matrix_csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_f64_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Format { line: idx + 1, reason: e.to_string() })?);
    }
    Ok(rows)
}

/// Writes `meta.txt`, `m.csv`, `w_in.csv`, `w_out.csv` and `seed_states.csv` into `dir`.
pub fn save_trained(trained: &TrainedReservoir, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let p = &trained.params;
    let mut meta = String::new();
    writeln!(meta, "n = {}", p.n).unwrap();
    writeln!(meta, "d = {}", p.d).unwrap();
    for (k, v) in [("gamma", p.gamma), ("sigma", p.sigma), ("rho", p.rho), ("beta", p.beta), ("tau", p.tau())] {
        writeln!(meta, "{k} = {v:.16e}").unwrap();
    }
    writeln!(meta, "listen_steps = {}", p.listen_steps()).unwrap();
    writeln!(meta, "train_steps = {}", p.train_steps()).unwrap();
    writeln!(meta, "predict_end_steps = {}", p.predict_end_steps()).unwrap();
    writeln!(meta, "spectral_radius = {:.16e}", trained.m.spectral_radius()).unwrap();
    let provenance = match trained.m.provenance() {
        Provenance::ErdosRenyi { seed, sparsity } => format!("erdos-renyi seed={seed} sparsity={sparsity:?}"),
        Provenance::Connectome { source_id, synapse_threshold } => {
            format!("connectome source={source_id} threshold={synapse_threshold}")
        }
        Provenance::Explicit => "explicit".to_string(),
    };
    writeln!(meta, "provenance = {provenance:?}").unwrap();
    let labels: Vec<String> = trained.seed_states.iter().map(|(l, _)| l.to_string()).collect();
    writeln!(meta, "seed_labels = {:?}", labels.join(",")).unwrap();
    std::fs::write(dir.join("meta.txt"), meta)?;

    let triplets = trained.m.entries().triplets().map(|(i, j, v)| vec![i as f64, j as f64, v]);
    std::fs::write(dir.join("m.csv"), write_matrix_csv("row,col,weight", triplets))?;
    let w_in = trained
        .w_in
        .columns()
        .iter()
        .zip(trained.w_in.values())
        .map(|(c, v)| vec![*c as f64, *v]);
    std::fs::write(dir.join("w_in.csv"), write_matrix_csv("col,value", w_in))?;
    let w = trained.w_out.to_dense();
    let w_rows = (0..w.nrows()).map(|i| w.row(i).iter().copied().collect());
    std::fs::write(dir.join("w_out.csv"), write_matrix_csv("w_out rows", w_rows))?;
    let seeds = trained.seed_states.iter().map(|(_, s)| s.clone());
    std::fs::write(dir.join("seed_states.csv"), write_matrix_csv("seed states (one per row, labels in meta)", seeds))?;
    Ok(())
}

/// Reads a reservoir written by [`save_trained`]. The coupling matrix comes
/// back with explicit provenance and its recorded spectral radius.
pub fn load_trained(dir: &Path) -> Result<TrainedReservoir> {
    let meta_text = std::fs::read_to_string(dir.join("meta.txt"))?;
    let mut meta = std::collections::HashMap::new();
    for (idx, line) in meta_text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        meta.insert(k.trim().to_string(), (idx + 1, v.trim().trim_matches('"').to_string()));
    }
    let get = |k: &str| -> Result<&str> {
        meta.get(k).map(|(_, v)| v.as_str()).ok_or(Error::Format { line: 0, reason: format!("missing `{k}`") })
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::Format { line: meta[k].0, reason: format!("bad number for `{k}`") })
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Format { line: meta[k].0, reason: format!("bad integer for `{k}`") })
    };
    let n = int("n")?;
    let d = int("d")?;
    let tau = num("tau")?;
    let mut params = ReservoirParams::seeing_double(n, num("gamma")?, num("rho")?).with_timing(
        tau,
        int("listen_steps")? as f64 * tau,
        int("train_steps")? as f64 * tau,
        int("predict_end_steps")? as f64 * tau,
    )?;
    params.d = d;
    params.sigma = num("sigma")?;
    params.beta = num("beta")?;

    let m_rows = parse_f64_rows(&std::fs::read_to_string(dir.join("m.csv"))?)?;
    let csr = CsrMatrix::from_triplets(n, m_rows.iter().map(|r| (r[0] as usize, r[1] as usize, r[2])).collect());
    let m = AdjacencyMatrix::new(csr, Provenance::Explicit)?;
    let w_in_rows = parse_f64_rows(&std::fs::read_to_string(dir.join("w_in.csv"))?)?;
    let w_in = InputMatrix::from_parts(
        d,
        w_in_rows.iter().map(|r| r[0] as usize).collect(),
        w_in_rows.iter().map(|r| r[1]).collect(),
    )?;
    let w_rows = parse_f64_rows(&std::fs::read_to_string(dir.join("w_out.csv"))?)?;
    let flat: Vec<f64> = w_rows.iter().flatten().copied().collect();
    let w_out = ReadoutMatrix::from_dense(&DMatrix::from_row_slice(w_rows.len(), 2 * n, &flat))?;
    let seeds = parse_f64_rows(&std::fs::read_to_string(dir.join("seed_states.csv"))?)?;
    let labels: Vec<OrbitLabel> = get("seed_labels")?
        .split(',')
        .map(|l| match l {
            "A" => Ok(OrbitLabel::A),
            "B" => Ok(OrbitLabel::B),
            other => Err(Error::Format { line: 0, reason: format!("unknown orbit label `{other}`") }),
        })
        .collect::<Result<_>>()?;
    TrainedReservoir::new(m, w_in, w_out, params, labels.into_iter().zip(seeds).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(cols: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix { columns: cols, window: (0.0, 0.0) }
    }

    #[test]
    fn q_examples() {
        assert_eq!(apply_q(&[0.0, 0.0]), vec![0.0; 4]);
        assert_eq!(apply_q(&[1.0, -1.0]), vec![1.0, -1.0, 1.0, 1.0]);
        assert_eq!(apply_q(&[0.5]), vec![0.5, 0.25]);
    }

    #[test]
    fn identity_regression() {
        let x = fm(DMatrix::identity(2, 2));
        let y = TargetMatrix { columns: DMatrix::identity(2, 2) };
        assert_eq!(ridge_regression(&x, &y, 0.0).unwrap().to_dense(), DMatrix::identity(2, 2));
        let half = ridge_regression(&x, &y, 1.0).unwrap().to_dense();
        assert!((half - DMatrix::identity(2, 2) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn singular_without_regularisation() {
        let x = fm(DMatrix::zeros(4, 3));
        let y = TargetMatrix { columns: DMatrix::zeros(2, 3) };
        assert!(matches!(ridge_regression(&x, &y, 0.0), Err(Error::Singular)));
        assert!(ridge_regression(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn blend_concatenates() {
        let a = fm(DMatrix::from_element(2, 3, 1.0));
        let b = fm(DMatrix::from_element(2, 2, 2.0));
        let ya = TargetMatrix { columns: DMatrix::from_element(1, 3, 1.0) };
        let yb = TargetMatrix { columns: DMatrix::from_element(1, 2, 2.0) };
        let (x, y) = blend(&a, &b, &ya, &yb).unwrap();
        assert_eq!(x.ncols(), 5);
        assert_eq!(x.columns.columns(0, 3), a.columns);
        assert_eq!(y.columns[(0, 4)], 2.0);
        let empty = fm(DMatrix::zeros(2, 0));
        let ye = TargetMatrix { columns: DMatrix::zeros(1, 0) };
        assert!(blend(&empty, &b, &ye, &yb).is_err());
        let tall = fm(DMatrix::zeros(4, 2));
        assert!(blend(&a, &tall, &ya, &yb).is_err());
    }

    #[test]
    fn readout_apply_matches_dense() {
        let w = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0]);
        let ro = ReadoutMatrix::from_dense(&w).unwrap();
        let r = [0.3, -0.7];
        let mut out = [0.0; 2];
        ro.apply(&r, &mut out);
        let expected = &w * nalgebra::DVector::from_vec(apply_q(&r));
        assert!((out[0] - expected[0]).abs() < 1e-15 && (out[1] - expected[1]).abs() < 1e-15);
    }
}
