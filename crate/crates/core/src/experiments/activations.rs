//! Per-neuron activation complexity across spectral radii.

use std::fmt;

use rayon::prelude::*;

use super::{Experiment, Model, RunHeader};
use crate::dynamics::run_prediction;
use crate::evaluation::unique_local_maxima_counts;
use crate::tasks::OrbitLabel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationCase {
    Multifunctional,
    NonMultifunctional,
}

impl ActivationCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivationCase::Multifunctional => "mf",
            ActivationCase::NonMultifunctional => "non_mf",
        }
    }
}

impl fmt::Display for ActivationCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRow {
    pub model: Model,
    pub case: ActivationCase,
    pub neuron: usize,
    pub rho: f64,
    pub count: usize,
}

pub const ACTIVATION_HEADER: &str = "model,case,neuron,rho,count";

/// For each case seed and each `ρ`, retrains the trial's reservoir, predicts
/// from the first orbit's seed state up to the end of the prediction window
/// and counts each neuron's distinct local maxima.
pub fn run_activation_experiment(
    exp: &Experiment,
    gamma: f64,
    rhos: &[f64],
    cases: &[(ActivationCase, u64)],
) -> Result<Vec<ActivationRow>> {
    if rhos.is_empty() {
        return Err(Error::invalid("rho_grid", "must be non-empty"));
    }
    let jobs: Vec<(ActivationCase, u64, f64)> =
        cases.iter().flat_map(|&(c, s)| rhos.iter().map(move |&r| (c, s, r))).collect();
    let tol = exp.eval.maxima_tolerance;
    let per_job: Vec<Result<Vec<ActivationRow>>> = exp.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(case, seed, rho)| {
                let trained = exp.train(gamma, rho, seed)?;
                let r0 = trained
                    .seed_state(OrbitLabel::A)
                    .ok_or_else(|| Error::Shape("missing seed state".into()))?
                    .to_vec();
                let (_, states) = run_prediction(&trained, &r0, trained.params().t_predict_end())?;
                Ok(unique_local_maxima_counts(&states, tol)
                    .into_iter()
                    .enumerate()
                    .map(|(neuron, count)| ActivationRow { model: exp.model, case, neuron, rho, count })
                    .collect())
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn activations_csv(header: &RunHeader, rows: &[ActivationRow]) -> String {
    let mut out = header.comment();
    out.push_str(ACTIVATION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.model, r.case, r.neuron, r.rho, r.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ReservoirParams;
    use crate::PERIOD;

    #[test]
    fn zero_coupling_column_is_flat() {
        let params = ReservoirParams::seeing_double(30, 5.0, 0.0)
            .with_timing(0.02, 2.0 * PERIOD, 4.0 * PERIOD, 7.0 * PERIOD)
            .unwrap();
        let exp = Experiment::errc(params, 0.1, 1);
        let rows = run_activation_experiment(&exp, 5.0, &[0.0], &[(ActivationCase::Multifunctional, 9)]).unwrap();
        assert_eq!(rows.len(), 30);
        assert!(rows.iter().all(|r| r.count <= 1 && r.rho == 0.0));
        let csv = activations_csv(&RunHeader::new("c", 1), &rows);
        assert_eq!(csv.lines().count(), 32);
    }
}
