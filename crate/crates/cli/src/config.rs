//! Flat TOML run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfrc_core::dynamics::ReservoirParams;
use mfrc_core::evaluation::EvalConfig;
use mfrc_core::experiments::Model;
use mfrc_core::PERIOD;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub n: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub tau: f64,
    pub t_listen: f64,
    pub t_train: f64,
    pub t_end: f64,

    pub sparsity: f64,
    /// Edge-list file for the fixed topology; the built-in synthetic
    /// connectome is used when absent.
    pub connectome: Option<PathBuf>,
    pub synapse_threshold: u64,
    pub connectome_seed: u64,

    pub transient_skip: f64,
    pub roundness_threshold: f64,
    pub maxima_tolerance: f64,

    pub exp1_sets: usize,
    pub exp1_trials: usize,

    pub sweep_gamma_start: f64,
    pub sweep_gamma_end: f64,
    pub sweep_gamma_step: f64,
    pub sweep_rho_start: f64,
    pub sweep_rho_end: f64,
    pub sweep_rho_step: f64,
    pub sweep_trials: usize,

    pub activation_rho_end: f64,
    pub activation_rho_step: f64,

    pub continuation_rho_start: f64,
    pub continuation_rho_end: f64,
    pub continuation_delta_rho: f64,
    pub continuation_seed: Option<u64>,

    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "errc".into(),
            n: 500,
            gamma: 5.0,
            sigma: 0.2,
            rho: 1.4,
            beta: 0.01,
            tau: 0.01,
            t_listen: 6.0 * PERIOD,
            t_train: 15.0 * PERIOD,
            t_end: 27.0 * PERIOD,
            sparsity: 0.05,
            connectome: None,
            synapse_threshold: 50,
            connectome_seed: 2023,
            transient_skip: 2.0 * PERIOD,
            roundness_threshold: 0.25,
            maxima_tolerance: 1e-3,
            exp1_sets: 50,
            exp1_trials: 100,
            sweep_gamma_start: 5.0,
            sweep_gamma_end: 95.0,
            sweep_gamma_step: 10.0,
            sweep_rho_start: 0.0,
            sweep_rho_end: 2.0,
            sweep_rho_step: 0.05,
            sweep_trials: 100,
            activation_rho_end: 1.8,
            activation_rho_step: 0.1,
            continuation_rho_start: 0.0,
            continuation_rho_end: 2.2,
            continuation_delta_rho: 0.01,
            continuation_seed: None,
            base_seed: 2024,
            output_dir: PathBuf::from("results"),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, reason: String },
    Parse { line: Option<usize>, reason: String },
    Invalid { field: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, reason } => write!(f, "cannot read {}: {reason}", path.display()),
            ConfigError::Parse { line: Some(l), reason } => write!(f, "config line {l}: {reason}"),
            ConfigError::Parse { line: None, reason } => write!(f, "config: {reason}"),
            ConfigError::Invalid { field, reason } => write!(f, "invalid `{field}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), reason: e.to_string() })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError::Parse { line, reason: e.message().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn model(&self) -> Result<Model, ConfigError> {
        Model::parse(&self.model).map_err(|_| invalid("model", format!("`{}` is not errc or ffrc", self.model)))
    }

    pub fn reservoir_params(&self) -> Result<ReservoirParams, ConfigError> {
        let mut p = ReservoirParams::seeing_double(self.n, self.gamma, self.rho);
        p.sigma = self.sigma;
        p.beta = self.beta;
        let p = p
            .with_timing(self.tau, self.t_listen, self.t_train, self.t_end)
            .map_err(core_invalid)?;
        p.validate().map_err(core_invalid)?;
        Ok(p)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            transient_skip: self.transient_skip,
            roundness_threshold: self.roundness_threshold,
            maxima_tolerance: self.maxima_tolerance,
            ..EvalConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model()?;
        self.reservoir_params()?;
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(invalid("sparsity", "must lie in [0, 1]"));
        }
        if self.synapse_threshold == 0 {
            return Err(invalid("synapse_threshold", "must be positive"));
        }
        let nonneg = [
            ("transient_skip", self.transient_skip),
            ("roundness_threshold", self.roundness_threshold),
            ("maxima_tolerance", self.maxima_tolerance),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("{v} must be finite and nonnegative")));
            }
        }
        if !(self.maxima_tolerance > 0.0) {
            return Err(invalid("maxima_tolerance", "must be positive"));
        }
        if self.transient_skip >= self.t_end - self.t_train {
            return Err(invalid("transient_skip", "must be shorter than the prediction window"));
        }
        let steps = [
            ("sweep_gamma_step", self.sweep_gamma_step),
            ("sweep_rho_step", self.sweep_rho_step),
            ("activation_rho_step", self.activation_rho_step),
            ("continuation_delta_rho", self.continuation_delta_rho),
        ];
        for (name, v) in steps {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        let ranges = [
            ("sweep_gamma_end", self.sweep_gamma_start, self.sweep_gamma_end),
            ("sweep_rho_end", self.sweep_rho_start, self.sweep_rho_end),
            ("continuation_rho_end", self.continuation_rho_start, self.continuation_rho_end),
        ];
        for (name, lo, hi) in ranges {
            if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(name, format!("range {lo}..{hi} is empty")));
            }
        }
        if self.sweep_gamma_start <= 0.0 {
            return Err(invalid("sweep_gamma_start", "decay rates must be positive"));
        }
        if self.sweep_rho_start < 0.0 || self.continuation_rho_start < 0.0 {
            return Err(invalid("sweep_rho_start", "spectral radii must be nonnegative"));
        }
        if !(self.activation_rho_end >= 0.0) {
            return Err(invalid("activation_rho_end", "must be nonnegative"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Canonical rendering hashed into result-file headers.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

fn core_invalid(e: mfrc_core::Error) -> ConfigError {
    match e {
        mfrc_core::Error::InvalidParameter { name, reason } => invalid(name, reason),
        other => invalid("config", other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        let p = c.reservoir_params().unwrap();
        assert_eq!((p.sigma, p.beta, p.tau()), (0.2, 0.01, 0.01));
        assert_eq!(p.listen_steps(), 3770);
        assert_eq!(p.train_steps(), 9425);
        assert_eq!(p.predict_end_steps(), 16965);
    }

    #[test]
    fn negative_step_is_rejected() {
        let e = parse_config("tau = -1.0").unwrap_err();
        assert!(matches!(&e, ConfigError::Invalid { field, .. } if field == "tau"), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("rho = 1.0\nfoo = 3\n").unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
        assert!(matches!(e, ConfigError::Parse { line: Some(2), .. }), "{e:?}");
    }

    #[test]
    fn type_errors_carry_line_numbers() {
        let e = parse_config("rho = 1.0\n\ngamma = \"fast\"\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: Some(3), .. }), "{e:?}");
    }

    #[test]
    fn overrides_apply() {
        let c = parse_config("model = \"ffrc\"\nrho = 1.5\ngamma = 15.0\nworkers = 2\n").unwrap();
        assert_eq!(c.model().unwrap(), Model::Ffrc);
        assert_eq!((c.rho, c.gamma, c.workers), (1.5, 15.0, 2));
        assert!(parse_config("model = \"lstm\"").is_err());
        assert!(parse_config("workers = 0").is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = parse_config("rho = 1.25\nconnectome = \"x.csv\"").unwrap();
        assert_eq!(parse_config(&c.canonical()).unwrap(), c);
    }
}
