//! Seeded trial harnesses.
//!
//! Every trial is identified by `(model, γ, ρ, index)` under a base seed; the
//! coupling and input matrices draw from labelled child streams of the trial
//! seed, so results never depend on scheduling or worker count.

mod activations;
mod batch;
mod continuation;
mod stats;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::dynamics::ReservoirParams;
use crate::evaluation::{evaluate_multifunctionality, Direction, EvalConfig, FailureMode, MfVerdict, OrbitCheck};
use crate::seeding::{derive_seed, trial_seed, INPUT_STREAM, MATRIX_STREAM};
use crate::tasks::{sample_signal, seeing_double_pair, OrbitSpec};
use crate::topology::{generate_erdos_renyi, generate_input_matrix, AdjacencyMatrix};
use crate::training::{train_multifunctional, TrainedReservoir};
use crate::{Error, Result};

pub use activations::{activations_csv, run_activation_experiment, ActivationCase, ActivationRow};
pub use batch::{
    exp1_csv, linear_grid, read_exp1_counts, run_experiment1, run_sweep, sweep_csv, Exp1Result, SweepCell, SweepManifest,
};
pub use continuation::{
    continuation_csv, merge_duplicates, run_continuation, same_attractor, Branch, BranchEnd, BranchSample,
    ContinuationConfig,
};
pub use stats::{rank_sum_test, rank_sum_test_with, RankSumResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Errc,
    Ffrc,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Errc => "errc",
            Model::Ffrc => "ffrc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "errc" | "er" => Ok(Model::Errc),
            "ffrc" | "ff" => Ok(Model::Ffrc),
            _ => Err(Error::invalid("model", format!("unknown model `{s}` (expected errc or ffrc)"))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a trial's coupling matrix comes from.
#[derive(Clone, Debug)]
pub enum TopologySource {
    /// A fresh Erdős–Rényi matrix per trial, drawn from the trial's matrix stream.
    ErdosRenyi { n: usize, sparsity: f64 },
    /// One matrix shared by all trials; only the input matrix reseeds.
    Fixed(Arc<AdjacencyMatrix>),
}

impl TopologySource {
    pub fn n(&self) -> usize {
        match self {
            TopologySource::ErdosRenyi { n, .. } => *n,
            TopologySource::Fixed(m) => m.n(),
        }
    }
}

/// Everything a batch of trials shares.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub model: Model,
    /// Template parameters; `n` follows the topology and `γ`, `ρ` are set per cell.
    pub params: ReservoirParams,
    pub topology: TopologySource,
    pub orbits: (OrbitSpec, OrbitSpec),
    pub eval: EvalConfig,
    pub base_seed: u64,
    pub workers: usize,
}

impl Experiment {
    pub fn errc(params: ReservoirParams, sparsity: f64, base_seed: u64) -> Self {
        let n = params.n;
        Self::new(Model::Errc, params, TopologySource::ErdosRenyi { n, sparsity }, base_seed)
    }

    pub fn ffrc(params: ReservoirParams, matrix: AdjacencyMatrix, base_seed: u64) -> Self {
        Self::new(Model::Ffrc, params, TopologySource::Fixed(Arc::new(matrix)), base_seed)
    }

    pub fn new(model: Model, mut params: ReservoirParams, topology: TopologySource, base_seed: u64) -> Self {
        params.n = topology.n();
        Self {
            model,
            params,
            topology,
            orbits: seeing_double_pair(),
            eval: EvalConfig::default(),
            base_seed,
            workers: 1,
        }
    }

    pub fn cell_params(&self, gamma: f64, rho: f64) -> ReservoirParams {
        let mut p = self.params.clone();
        p.gamma = gamma;
        p.rho = rho;
        p
    }

    pub fn trial_seed(&self, gamma: f64, rho: f64, index: u64) -> u64 {
        trial_seed(self.base_seed, self.model.as_str(), gamma, rho, index)
    }

    /// Coupling matrix of the trial with seed `seed`, before spectral scaling.
    pub fn coupling(&self, seed: u64) -> Result<AdjacencyMatrix> {
        match &self.topology {
            TopologySource::ErdosRenyi { n, sparsity } => {
                generate_erdos_renyi(*n, *sparsity, derive_seed(seed, MATRIX_STREAM))
            }
            TopologySource::Fixed(m) => Ok(m.as_ref().clone()),
        }
    }

    /// Builds, scales and trains the reservoir of one trial.
    pub fn train(&self, gamma: f64, rho: f64, seed: u64) -> Result<TrainedReservoir> {
        let params = self.cell_params(gamma, rho);
        params.validate()?;
        let m = self.coupling(seed)?;
        self.train_with(&m, &params, seed)
    }

    /// Trains with a given coupling matrix; the input matrix still comes from `seed`.
    pub fn train_with(&self, m: &AdjacencyMatrix, params: &ReservoirParams, seed: u64) -> Result<TrainedReservoir> {
        let w_in = generate_input_matrix(params.n, params.d, derive_seed(seed, INPUT_STREAM))?;
        let (a, b) = &self.orbits;
        let u1 = sample_signal(a, 0.0, params.t_train(), params.tau())?;
        let u2 = sample_signal(b, 0.0, params.t_train(), params.tau())?;
        train_multifunctional(m, &w_in, params, &u1, &u2)
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub model: Model,
    pub seed: u64,
    pub rho: f64,
    pub gamma: f64,
    pub verdict: MfVerdict,
    /// Numerical failure that replaced the verdict, if any.
    pub error: Option<String>,
    pub wall_time: f64,
}

pub const TRIAL_HEADER: &str = "trial_id,seed,model,rho,gamma,roundness_a,dir_a,roundness_b,dir_b,mf,failure_mode";

impl TrialRecord {
    /// Verdict row; wall time is left out so rows are reproducible.
    pub fn csv_row(&self) -> String {
        let v = &self.verdict;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.trial_id,
            self.seed,
            self.model,
            self.rho,
            self.gamma,
            fmt_metric(v.check_a.roundness),
            v.check_a.direction,
            fmt_metric(v.check_b.roundness),
            v.check_b.direction,
            u8::from(v.multifunctional),
            v.failure_mode,
        )
    }
}

/// Six significant digits, the precision of summary metrics.
pub fn fmt_metric(x: f64) -> String {
    if x.is_finite() {
        format!("{}", format!("{x:.5e}").parse::<f64>().unwrap_or(x))
    } else {
        format!("{x}")
    }
}

/// Runs trial `index` of the cell `(γ, ρ)`.
pub fn run_trial(exp: &Experiment, gamma: f64, rho: f64, index: u64) -> TrialRecord {
    run_trial_with_seed(exp, gamma, rho, exp.trial_seed(gamma, rho, index), index)
}

/// Runs one trial with an explicit seed. Numerical failures become
/// `Diverged` verdicts instead of errors.
pub fn run_trial_with_seed(exp: &Experiment, gamma: f64, rho: f64, seed: u64, trial_id: u64) -> TrialRecord {
    let start = Instant::now();
    let outcome = exp.train(gamma, rho, seed).and_then(|trained| {
        let t_end = trained.params().t_predict_end();
        evaluate_multifunctionality(&trained, (&exp.orbits.0, &exp.orbits.1), t_end, &exp.eval)
    });
    let (verdict, error) = match outcome {
        Ok(v) => (v, None),
        Err(e) => {
            let failed = OrbitCheck { roundness: f64::INFINITY, direction: Direction::Undefined, passed: false };
            let v = MfVerdict { check_a: failed, check_b: failed, multifunctional: false, failure_mode: FailureMode::Diverged };
            (v, Some(e.to_string()))
        }
    };
    TrialRecord {
        trial_id,
        model: exp.model,
        seed,
        rho,
        gamma,
        verdict,
        error,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Provenance line written at the top of every result file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunHeader {
    pub config_hash: String,
    pub base_seed: u64,
}

impl RunHeader {
    pub fn new(config_text: &str, base_seed: u64) -> Self {
        Self { config_hash: config_hash(config_text), base_seed }
    }

    pub fn comment(&self) -> String {
        format!("# config_hash={} base_seed={}\n", self.config_hash, self.base_seed)
    }
}

/// First 16 hex digits of the SHA-256 of a canonical config rendering.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn trials_csv(header: &RunHeader, records: &[TrialRecord]) -> String {
    let mut out = header.comment();
    out.push_str(TRIAL_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}
