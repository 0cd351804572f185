//! Batches of multifunctionality trials: repeated sets and (γ, ρ) sweeps.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{run_trial, Experiment, Model, RunHeader, TrialRecord};
use crate::{Error, Result};

/// Per-set counts of one model's repeated-set experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Exp1Result {
    pub model: Model,
    pub gamma: f64,
    pub rho: f64,
    pub set_counts: Vec<usize>,
    pub records: Vec<TrialRecord>,
}

impl Exp1Result {
    pub fn mean(&self) -> f64 {
        if self.set_counts.is_empty() {
            return 0.0;
        }
        self.set_counts.iter().sum::<usize>() as f64 / self.set_counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.set_counts.iter().sum()
    }

    /// Fraction of all trials that were multifunctional.
    pub fn rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total() as f64 / self.records.len() as f64
        }
    }
}

/// `n_sets × trials_per_set` trials at one `(γ, ρ)`; trial `i` of set `s`
/// has index `s · trials_per_set + i`.
pub fn run_experiment1(
    exp: &Experiment,
    n_sets: usize,
    trials_per_set: usize,
    gamma: f64,
    rho: f64,
    on_trial: &(dyn Fn(&TrialRecord) + Sync),
) -> Result<Exp1Result> {
    exp.cell_params(gamma, rho).validate()?;
    let total = (n_sets * trials_per_set) as u64;
    let records: Vec<TrialRecord> = exp.pool()?.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| {
                let r = run_trial(exp, gamma, rho, i);
                on_trial(&r);
                r
            })
            .collect()
    });
    let set_counts = if trials_per_set == 0 {
        Vec::new()
    } else {
        records.chunks(trials_per_set).map(|c| c.iter().filter(|r| r.verdict.multifunctional).count()).collect()
    };
    Ok(Exp1Result { model: exp.model, gamma, rho, set_counts, records })
}

pub const EXP1_HEADER: &str = "model,set_id,mf_count";

pub fn exp1_csv(header: &RunHeader, results: &[Exp1Result]) -> String {
    let mut out = header.comment();
    out.push_str(EXP1_HEADER);
    out.push('\n');
    for r in results {
        for (s, c) in r.set_counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", r.model, s, c));
        }
    }
    out
}

/// MF counts from an `exp1_counts.csv` text, optionally restricted to one model.
pub fn read_exp1_counts(text: &str, model: Option<Model>) -> Result<Vec<f64>> {
    let mut counts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == EXP1_HEADER {
            continue;
        }
        let bad = |reason: &str| Error::Format { line: i + 1, reason: reason.to_string() };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("expected model,set_id,mf_count"));
        }
        let m = Model::parse(fields[0]).map_err(|_| bad("unknown model"))?;
        let c: f64 = fields[2].parse().map_err(|_| bad("mf_count is not a number"))?;
        if model.is_none_or(|want| want == m) {
            counts.push(c);
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub model: Model,
    pub gamma: f64,
    pub rho: f64,
    pub mf_count: usize,
    pub trials: usize,
}

pub const SWEEP_HEADER: &str = "model,gamma,rho,mf_count,trials";

impl SweepCell {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.model, self.gamma, self.rho, self.mf_count, self.trials)
    }

    fn parse_row(line: &str, line_no: usize) -> Result<Self> {
        let bad = |reason: &str| Error::Format { line: line_no, reason: reason.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("expected model,gamma,rho,mf_count,trials"));
        }
        Ok(Self {
            model: Model::parse(f[0]).map_err(|_| bad("unknown model"))?,
            gamma: f[1].parse().map_err(|_| bad("bad gamma"))?,
            rho: f[2].parse().map_err(|_| bad("bad rho"))?,
            mf_count: f[3].parse().map_err(|_| bad("bad mf_count"))?,
            trials: f[4].parse().map_err(|_| bad("bad trials"))?,
        })
    }

    fn key(&self) -> (Model, u64, u64, usize) {
        (self.model, self.gamma.to_bits(), self.rho.to_bits(), self.trials)
    }
}

pub fn sweep_csv(header: &RunHeader, cells: &[SweepCell]) -> String {
    let mut out = header.comment();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&c.csv_row());
        out.push('\n');
    }
    out
}

/// Append-only record of finished sweep cells.
#[derive(Clone, Debug)]
pub struct SweepManifest {
    path: PathBuf,
}

impl SweepManifest {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Vec<SweepCell>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#') && l.trim() != SWEEP_HEADER)
            .map(|(i, l)| SweepCell::parse_row(l.trim(), i + 1))
            .collect()
    }

    pub fn append(&self, cell: &SweepCell) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{}", cell.csv_row())?;
        Ok(())
    }
}

/// Full factorial sweep over `gammas × rhos`, `trials` seeded trials per cell.
/// Cells already listed in `manifest` are reused, new ones are appended.
pub fn run_sweep(
    exp: &Experiment,
    gammas: &[f64],
    rhos: &[f64],
    trials: usize,
    manifest: Option<&SweepManifest>,
    on_cell: &(dyn Fn(&SweepCell) + Sync),
) -> Result<Vec<SweepCell>> {
    if gammas.is_empty() || rhos.is_empty() {
        return Err(Error::invalid("grid", "gamma and rho grids must be non-empty"));
    }
    for &g in gammas {
        for &r in rhos {
            exp.cell_params(g, r).validate()?;
        }
    }
    let done: BTreeMap<_, SweepCell> = match manifest {
        Some(m) => m.load()?.into_iter().map(|c| (c.key(), c)).collect(),
        None => BTreeMap::new(),
    };
    let pool = exp.pool()?;
    let mut cells = Vec::with_capacity(gammas.len() * rhos.len());
    for &gamma in gammas {
        for &rho in rhos {
            let probe = SweepCell { model: exp.model, gamma, rho, mf_count: 0, trials };
            if let Some(c) = done.get(&probe.key()) {
                cells.push(c.clone());
                continue;
            }
            let mf_count = pool.install(|| {
                (0..trials as u64)
                    .into_par_iter()
                    .filter(|&i| run_trial(exp, gamma, rho, i).verdict.multifunctional)
                    .count()
            });
            let cell = SweepCell { mf_count, ..probe };
            if let Some(m) = manifest {
                m.append(&cell)?;
            }
            on_cell(&cell);
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// `start, start + step, …` up to `end` inclusive, rounded to 12 decimals so
/// grid values print cleanly.
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::invalid("grid", format!("cannot step from {start} to {end} by {step}")));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ReservoirParams;
    use crate::PERIOD;

    fn tiny() -> Experiment {
        let params = ReservoirParams::seeing_double(30, 5.0, 1.0)
            .with_timing(0.02, 2.0 * PERIOD, 4.0 * PERIOD, 7.0 * PERIOD)
            .unwrap();
        let mut exp = Experiment::errc(params, 0.1, 5);
        exp.eval.transient_skip = PERIOD;
        exp
    }

    #[test]
    fn empty_sets_are_a_no_op() {
        let r = run_experiment1(&tiny(), 3, 0, 5.0, 1.4, &|_| {}).unwrap();
        assert!(r.set_counts.is_empty());
        assert_eq!(r.mean(), 0.0);
    }

    #[test]
    fn sets_partition_trials() {
        let r = run_experiment1(&tiny(), 2, 3, 5.0, 1.4, &|_| {}).unwrap();
        assert_eq!(r.set_counts.len(), 2);
        assert_eq!(r.records.len(), 6);
        assert_eq!(r.records[4].trial_id, 4);
        let text = exp1_csv(&RunHeader::new("x", 5), std::slice::from_ref(&r));
        let counts = read_exp1_counts(&text, Some(Model::Errc)).unwrap();
        assert_eq!(counts, r.set_counts.iter().map(|c| *c as f64).collect::<Vec<_>>());
        assert!(read_exp1_counts(&text, Some(Model::Ffrc)).unwrap().is_empty());
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let serial = tiny();
        let mut parallel = tiny();
        parallel.workers = 3;
        let a = run_experiment1(&serial, 1, 4, 5.0, 1.4, &|_| {}).unwrap();
        let b = run_experiment1(&parallel, 1, 4, 5.0, 1.4, &|_| {}).unwrap();
        let rows = |r: &Exp1Result| r.records.iter().map(|t| t.csv_row()).collect::<Vec<_>>();
        assert_eq!(rows(&a), rows(&b));
    }

    #[test]
    fn sweep_resumes_from_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = SweepManifest::new(dir.path().join("manifest.csv"));
        let exp = tiny();
        let first = run_sweep(&exp, &[5.0], &[0.5, 1.0], 2, Some(&manifest), &|_| {}).unwrap();
        assert_eq!(manifest.load().unwrap(), first);
        // A rerun finds every cell in the manifest and computes nothing.
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let second = run_sweep(&exp, &[5.0], &[0.5, 1.0], 2, Some(&manifest), &|_| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        })
        .unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.into_inner(), 0);
        assert_eq!(manifest.load().unwrap().len(), 2);
        assert!(run_sweep(&exp, &[], &[1.0], 2, None, &|_| {}).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(linear_grid(0.0, 2.0, 0.05).unwrap().len(), 41);
        assert_eq!(linear_grid(0.0, 2.0, 0.05).unwrap()[3], 0.15);
        assert_eq!(linear_grid(5.0, 95.0, 10.0).unwrap(), vec![5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 95.0]);
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }
}
