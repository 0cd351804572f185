//! Command-line driver: configuration, subcommand dispatch and result files.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand};

use mfrc_core::experiments::{
    self, activations_csv, continuation_csv, exp1_csv, linear_grid, rank_sum_test, read_exp1_counts,
    run_activation_experiment, run_continuation, run_experiment1, run_sweep, run_trial_with_seed, sweep_csv,
    trials_csv, ActivationCase, ContinuationConfig, Experiment, Model, RunHeader, SweepManifest, TRIAL_HEADER,
};
use mfrc_core::seeding::{derive_seed, MATRIX_STREAM};
use mfrc_core::tasks::{sample_signal, seeing_double_pair};
use mfrc_core::topology::{
    generate_erdos_renyi, ingest_connectome, io::write_matrix, scale_to_spectral_radius, synthetic_connectome,
    AdjacencyMatrix, ConnectomeEdgeList, SyntheticConnectomeSpec,
};

pub use config::{load_config, parse_config, ConfigError, RunConfig};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "MFRC_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mfrc", version, about = "Multifunctional reservoir computing experiments")]
pub struct Cli {
    /// Flat TOML configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads, overriding the configuration.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the coupling matrix of a model, unscaled and scaled to `rho`.
    GenTopology {
        #[arg(long)]
        model: Option<String>,
        /// Trial seed for the random model; defaults to the base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one trial with an explicit trial seed and append its verdict row.
    Trial {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Repeated sets of trials at the configured (gamma, rho); both models unless one is named.
    Exp1 {
        #[arg(long)]
        model: Option<String>,
    },
    /// Resumable (gamma, rho) sweep.
    Sweep {
        #[arg(long)]
        model: Option<String>,
    },
    /// Per-neuron local-maxima counts across rho for one MF and one non-MF trial seed.
    Activations {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mf_seed: u64,
        #[arg(long)]
        non_mf_seed: u64,
    },
    /// Warm-started attractor tracking in rho.
    Continuation {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank-sum test between two exp1 count files.
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Write both training signals on [0, t_end].
    DumpSignal,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(mfrc_core::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(mfrc_core::Error::InvalidParameter { .. } | mfrc_core::Error::Format { .. }) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<mfrc_core::Error> for CliError {
    fn from(e: mfrc_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match resolve_config(&cli).and_then(|cfg| dispatch(&cli.command, &cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mfrc: {e}");
            e.exit_code()
        }
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Header for result files; output location and worker count do not affect
/// results and are left out of the hash.
pub fn run_header(cfg: &RunConfig) -> RunHeader {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    canonical.workers = 1;
    RunHeader::new(&canonical.canonical(), cfg.base_seed)
}

fn model_or_default(cfg: &RunConfig, model: &Option<String>) -> Result<Model, CliError> {
    match model {
        Some(m) => Ok(Model::parse(m).map_err(|_| ConfigError::Invalid {
            field: "model".into(),
            reason: format!("`{m}` is not errc or ffrc"),
        })?),
        None => Ok(cfg.model()?),
    }
}

/// The fixed topology: the configured edge list, or the built-in synthetic connectome.
pub fn connectome_matrix(cfg: &RunConfig) -> Result<AdjacencyMatrix, CliError> {
    let edges = match &cfg.connectome {
        Some(path) => ConnectomeEdgeList::read(path)?,
        None => synthetic_connectome(&SyntheticConnectomeSpec { seed: cfg.connectome_seed, ..Default::default() })?,
    };
    Ok(ingest_connectome(&edges, cfg.synapse_threshold)?)
}

/// The experiment a configuration describes for `model`.
pub fn build_experiment(cfg: &RunConfig, model: Model) -> Result<Experiment, CliError> {
    let params = cfg.reservoir_params()?;
    let mut exp = match model {
        Model::Errc => Experiment::errc(params, cfg.sparsity, cfg.base_seed),
        Model::Ffrc => Experiment::ffrc(params, connectome_matrix(cfg)?, cfg.base_seed),
    };
    exp.eval = cfg.eval_config();
    exp.workers = cfg.workers;
    Ok(exp)
}

fn write_output(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(name);
    fs::write(&path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    let header = run_header(cfg);
    match command {
        Command::GenTopology { model, seed } => {
            let model = model_or_default(cfg, model)?;
            let raw = match model {
                Model::Errc => {
                    let seed = seed.unwrap_or(cfg.base_seed);
                    generate_erdos_renyi(cfg.n, cfg.sparsity, derive_seed(seed, MATRIX_STREAM))?
                }
                Model::Ffrc => connectome_matrix(cfg)?,
            };
            let scaled = scale_to_spectral_radius(&raw, cfg.rho)?;
            fs::create_dir_all(&cfg.output_dir)?;
            for (m, stem) in [(&raw, format!("m_{model}_raw")), (&scaled, format!("m_{model}"))] {
                for p in write_matrix(m, &cfg.output_dir, &stem)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            println!("n = {}, spectral radius {} scaled to {}", raw.n(), raw.spectral_radius(), scaled.spectral_radius());
        }
        Command::Trial { model, seed, rho, gamma } => {
            let model = model_or_default(cfg, model)?;
            let exp = build_experiment(cfg, model)?;
            let (gamma, rho) = (gamma.unwrap_or(cfg.gamma), rho.unwrap_or(cfg.rho));
            exp.cell_params(gamma, rho).validate()?;
            let record = run_trial_with_seed(&exp, gamma, rho, *seed, 0);
            if let Some(e) = &record.error {
                eprintln!("trial failed numerically: {e}");
            }
            println!("{TRIAL_HEADER}\n{}", record.csv_row());
            fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("trials.csv");
            let fresh = !path.exists();
            let mut f = fs::OpenOptions::new().create(true).append(true).open(&path)?;
            if fresh {
                writeln!(f, "{}{TRIAL_HEADER}", header.comment())?;
            }
            writeln!(f, "{}", record.csv_row())?;
        }
        Command::Exp1 { model } => {
            let models = match model {
                Some(_) => vec![model_or_default(cfg, model)?],
                None => vec![Model::Ffrc, Model::Errc],
            };
            let mut results = Vec::new();
            for m in models {
                let exp = build_experiment(cfg, m)?;
                let total = cfg.exp1_sets * cfg.exp1_trials;
                let done = AtomicUsize::new(0);
                let mf = AtomicUsize::new(0);
                let r = run_experiment1(&exp, cfg.exp1_sets, cfg.exp1_trials, cfg.gamma, cfg.rho, &|t| {
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    let c = mf.fetch_add(usize::from(t.verdict.multifunctional), Ordering::Relaxed)
                        + usize::from(t.verdict.multifunctional);
                    eprintln!("exp1 {m} trial {k}/{total} mf so far {c}");
                })?;
                println!("{m}: mean mf count {:.6} over {} sets", r.mean(), r.set_counts.len());
                write_output(cfg, &format!("exp1_{m}.csv"), &exp1_csv(&header, std::slice::from_ref(&r)))?;
                results.push(r);
            }
            write_output(cfg, "exp1_counts.csv", &exp1_csv(&header, &results))?;
            let records: Vec<_> = results.iter().flat_map(|r| r.records.iter().cloned()).collect();
            write_output(cfg, "exp1_trials.csv", &trials_csv(&header, &records))?;
        }
        Command::Sweep { model } => {
            let model = model_or_default(cfg, model)?;
            let exp = build_experiment(cfg, model)?;
            let gammas = linear_grid(cfg.sweep_gamma_start, cfg.sweep_gamma_end, cfg.sweep_gamma_step)?;
            let rhos = linear_grid(cfg.sweep_rho_start, cfg.sweep_rho_end, cfg.sweep_rho_step)?;
            fs::create_dir_all(&cfg.output_dir)?;
            let manifest = SweepManifest::new(sweep_manifest_path(cfg, model));
            let cells = run_sweep(&exp, &gammas, &rhos, cfg.sweep_trials, Some(&manifest), &|c| {
                eprintln!("sweep {model} gamma {} rho {}: {}/{}", c.gamma, c.rho, c.mf_count, c.trials);
            })?;
            write_output(cfg, "sweep.csv", &sweep_csv(&header, &cells))?;
        }
        Command::Activations { model, mf_seed, non_mf_seed } => {
            let model = model_or_default(cfg, model)?;
            let exp = build_experiment(cfg, model)?;
            let rhos = linear_grid(0.0, cfg.activation_rho_end, cfg.activation_rho_step)?;
            let cases = [(ActivationCase::Multifunctional, *mf_seed), (ActivationCase::NonMultifunctional, *non_mf_seed)];
            let rows = run_activation_experiment(&exp, cfg.gamma, &rhos, &cases)?;
            write_output(cfg, "activations.csv", &activations_csv(&header, &rows))?;
        }
        Command::Continuation { model, seed } => {
            let model = model_or_default(cfg, model)?;
            let exp = build_experiment(cfg, model)?;
            let seed = seed.or(cfg.continuation_seed).unwrap_or_else(|| exp.trial_seed(cfg.gamma, 0.0, 0));
            let ccfg = ContinuationConfig::new(
                cfg.gamma,
                cfg.continuation_rho_start,
                cfg.continuation_rho_end,
                cfg.continuation_delta_rho,
                seed,
            );
            let branches = run_continuation(&exp, &ccfg, &|rho, live| {
                eprintln!("continuation {model} rho {rho}: {live} live branches");
            })?;
            write_output(cfg, "continuation.csv", &continuation_csv(&header, &exp, &branches))?;
        }
        Command::Stats { a, b } => {
            let text = stats_summary(&header, a, b)?;
            print!("{text}");
            write_output(cfg, "stats.txt", &text)?;
        }
        Command::DumpSignal => {
            let p = cfg.reservoir_params()?;
            let (ca, cb) = seeing_double_pair();
            for (spec, name) in [(ca, "signal_a.csv"), (cb, "signal_b.csv")] {
                let s = sample_signal(&spec, 0.0, p.t_predict_end(), p.tau())?;
                write_output(cfg, name, &s.to_csv())?;
            }
        }
    }
    Ok(())
}

pub fn sweep_manifest_path(cfg: &RunConfig, model: Model) -> PathBuf {
    cfg.output_dir.join(format!("sweep_manifest_{model}_{}.csv", run_header(cfg).config_hash))
}

/// Plain `key = value` rank-sum summary of two exp1 count files.
pub fn stats_summary(header: &RunHeader, a: &Path, b: &Path) -> Result<String, CliError> {
    let xa = read_exp1_counts(&fs::read_to_string(a)?, None)?;
    let xb = read_exp1_counts(&fs::read_to_string(b)?, None)?;
    let r = rank_sum_test(&xa, &xb)?;
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let f = experiments::fmt_metric;
    Ok(format!(
        "{}sample_a = {}\nn_a = {}\nmean_a = {}\nsample_b = {}\nn_b = {}\nmean_b = {}\nu = {}\nz = {}\np = {}\n",
        header.comment(),
        a.display(),
        xa.len(),
        f(mean(&xa)),
        b.display(),
        xb.len(),
        f(mean(&xb)),
        f(r.u_statistic),
        f(r.z_score),
        f(r.p_value),
    ))
}
