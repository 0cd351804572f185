//! Warm-started tracking of predicting-reservoir attractors in `ρ`.

use rayon::prelude::*;

use super::{fmt_metric, Experiment, RunHeader};
use crate::dynamics::predict_readout;
use crate::evaluation::{classify_attractor, AttractorKind, AttractorLabel, EvalConfig};
use crate::experiments::batch::linear_grid;
use crate::tasks::OrbitLabel;
use crate::training::TrainedReservoir;
use crate::{Error, Result, PERIOD};

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuationConfig {
    pub gamma: f64,
    pub rho_start: f64,
    pub rho_end: f64,
    pub delta_rho: f64,
    /// Trial seed fixing the coupling and input matrices for the whole sweep.
    pub seed: u64,
    /// Prediction time discarded before classification, in nominal periods.
    pub transient_periods: f64,
    /// Classified prediction time, in nominal periods.
    pub window_periods: f64,
    /// Longer window used when section crossings are spread out and too few
    /// to estimate their box-counting slope.
    pub extended_periods: f64,
    pub min_section_points: usize,
    /// Relative tolerance under which two attractor summaries coincide.
    pub merge_tolerance: f64,
}

impl ContinuationConfig {
    pub fn new(gamma: f64, rho_start: f64, rho_end: f64, delta_rho: f64, seed: u64) -> Self {
        Self {
            gamma,
            rho_start,
            rho_end,
            delta_rho,
            seed,
            transient_periods: 10.0,
            window_periods: 12.0,
            extended_periods: 150.0,
            min_section_points: 120,
            merge_tolerance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchSample {
    pub rho: f64,
    pub label: AttractorLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BranchEnd {
    /// Landed on the same attractor as an older branch.
    Merged { rho: f64, into: usize },
    Diverged { rho: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub branch_id: usize,
    /// Training seed state the branch was first found from.
    pub origin: OrbitLabel,
    pub samples: Vec<BranchSample>,
    /// Final reservoir state at the last sample, the warm start for the next step.
    pub state: Vec<f64>,
    pub end: Option<BranchEnd>,
}

impl Branch {
    pub fn born_at(&self) -> f64 {
        self.samples[0].rho
    }

    pub fn is_live(&self) -> bool {
        self.end.is_none()
    }
}

/// Whether two attractor summaries describe the same attractor: same
/// rotation sense, compatible kinds, and means and bounding boxes within
/// `tol` relative to the larger diameter (at least one length unit).
pub fn same_attractor(a: &AttractorLabel, b: &AttractorLabel, tol: f64) -> bool {
    use AttractorKind::*;
    let compatible = match (a.kind, b.kind) {
        (Diverged, _) | (_, Diverged) => false,
        (LimitCycle { .. }, LimitCycle { .. }) => true,
        (Torus | Chaotic, Torus | Chaotic) => true,
        (x, y) => x == y,
    };
    if !compatible || a.direction != b.direction {
        return false;
    }
    let scale = tol * a.diameter.max(b.diameter).max(1.0);
    let close = |x: f64, y: f64| (x - y).abs() <= scale;
    close(a.mean[0], b.mean[0])
        && close(a.mean[1], b.mean[1])
        && a.bbox.iter().zip(&b.bbox).all(|(x, y)| close(*x, *y))
}

/// Indices of the labels kept after dropping each label that duplicates an
/// earlier kept one.
pub fn merge_duplicates(labels: &[AttractorLabel], tol: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if !kept.iter().any(|&k| same_attractor(&labels[k], l, tol)) {
            kept.push(i);
        }
    }
    kept
}

struct Probe {
    label: AttractorLabel,
    state: Vec<f64>,
}

fn probe(trained: &TrainedReservoir, r0: &[f64], cfg: &ContinuationConfig, eval: &EvalConfig) -> Result<Probe> {
    let tau = trained.params().tau();
    let steps = ((cfg.transient_periods + cfg.window_periods) * PERIOD / tau).round() as usize;
    let (pred, outcome) = predict_readout(trained, r0, steps)?;
    let expected = crate::tasks::seeing_double_pair();
    let eval = EvalConfig {
        transient_skip: cfg.transient_periods * PERIOD,
        min_periods: cfg.window_periods.min(eval.min_periods),
        ..eval.clone()
    };
    let mut label = classify_attractor(&pred, (&expected.0, &expected.1), &eval)?;
    let mut state = outcome.final_state;
    let spread = matches!(label.kind, AttractorKind::Torus | AttractorKind::Chaotic);
    if spread && label.crossings < cfg.min_section_points && cfg.extended_periods > cfg.window_periods {
        let steps = (cfg.extended_periods * PERIOD / tau).round() as usize;
        let (pred, outcome) = predict_readout(trained, &state, steps)?;
        let eval = EvalConfig { transient_skip: 0.0, min_periods: cfg.extended_periods.min(eval.min_periods), ..eval };
        label = classify_attractor(&pred, (&expected.0, &expected.1), &eval)?;
        state = outcome.final_state;
    }
    Ok(Probe { label, state })
}

/// Sweeps `ρ` upwards. At each step the reservoir is rescaled and retrained,
/// every live branch is continued from its previous final state, and both
/// training seed states are probed for newly born attractors; duplicates
/// are merged into the oldest branch.
///
/// `on_step` receives each finished `ρ` and the number of live branches.
pub fn run_continuation(
    exp: &Experiment,
    cfg: &ContinuationConfig,
    on_step: &(dyn Fn(f64, usize) + Sync),
) -> Result<Vec<Branch>> {
    let rhos = linear_grid(cfg.rho_start, cfg.rho_end, cfg.delta_rho)?;
    if !(cfg.window_periods > 0.0) || cfg.transient_periods < 0.0 {
        return Err(Error::invalid("window_periods", "classification window must be positive"));
    }
    let base = exp.coupling(cfg.seed)?;
    let pool = exp.pool()?;
    let mut branches: Vec<Branch> = Vec::new();

    for rho in rhos {
        let params = exp.cell_params(cfg.gamma, rho);
        let trained = exp.train_with(&base, &params, cfg.seed)?;

        let live: Vec<usize> = branches.iter().filter(|b| b.is_live()).map(|b| b.branch_id).collect();
        let mut starts: Vec<(Option<usize>, OrbitLabel, Vec<f64>)> =
            live.iter().map(|&id| (Some(id), branches[id].origin, branches[id].state.clone())).collect();
        for (label, state) in trained.seed_states() {
            starts.push((None, *label, state.clone()));
        }
        let probes: Vec<Result<Probe>> =
            pool.install(|| starts.par_iter().map(|(_, _, r0)| probe(&trained, r0, cfg, &exp.eval)).collect());

        // Accepted attractors at this rho, with the branch that owns each.
        let mut accepted: Vec<(AttractorLabel, usize)> = Vec::new();
        for ((owner, origin, _), p) in starts.into_iter().zip(probes) {
            let p = p?;
            let duplicate = accepted.iter().find(|(l, _)| same_attractor(l, &p.label, cfg.merge_tolerance)).map(|a| a.1);
            match owner {
                Some(id) => {
                    let b = &mut branches[id];
                    b.samples.push(BranchSample { rho, label: p.label.clone() });
                    if p.label.kind == AttractorKind::Diverged {
                        b.end = Some(BranchEnd::Diverged { rho });
                    } else if let Some(into) = duplicate {
                        b.end = Some(BranchEnd::Merged { rho, into });
                    } else {
                        b.state = p.state;
                        accepted.push((p.label, id));
                    }
                }
                None if duplicate.is_none() && p.label.kind != AttractorKind::Diverged => {
                    let id = branches.len();
                    branches.push(Branch {
                        branch_id: id,
                        origin,
                        samples: vec![BranchSample { rho, label: p.label.clone() }],
                        state: p.state,
                        end: None,
                    });
                    accepted.push((p.label, id));
                }
                None => {}
            }
        }
        on_step(rho, branches.iter().filter(|b| b.is_live()).count());
    }
    Ok(branches)
}

pub const CONTINUATION_HEADER: &str = "model,branch_id,rho,label,roundness,direction,crossings";

pub fn continuation_csv(header: &RunHeader, exp: &Experiment, branches: &[Branch]) -> String {
    let mut out = header.comment();
    out.push_str(CONTINUATION_HEADER);
    out.push('\n');
    for b in branches {
        for s in &b.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                exp.model,
                b.branch_id,
                s.rho,
                s.label.kind.name(),
                fmt_metric(s.label.roundness),
                s.label.direction,
                s.label.crossings
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ReservoirParams;
    use crate::evaluation::Direction;
    use proptest::prelude::*;

    fn label(kind: AttractorKind, mean: [f64; 2], half: f64, direction: Direction) -> AttractorLabel {
        AttractorLabel {
            kind,
            mean,
            roundness: 0.0,
            direction,
            crossings: 0,
            diameter: 2.0 * half * std::f64::consts::SQRT_2,
            bbox: [mean[0] - half, mean[0] + half, mean[1] - half, mean[1] + half],
        }
    }

    #[test]
    fn duplicates_need_matching_geometry_and_sense() {
        let a = label(AttractorKind::FixedPoint, [0.5, 0.5], 0.0, Direction::Undefined);
        let b = label(AttractorKind::FixedPoint, [-0.5, -0.5], 0.0, Direction::Undefined);
        assert!(!same_attractor(&a, &b, 0.05));
        assert!(same_attractor(&a, &a, 0.05));
        let ca = label(AttractorKind::ReconstructedCircle(OrbitLabel::A), [0.0, 0.0], 5.0, Direction::Ccw);
        let cb = label(AttractorKind::ReconstructedCircle(OrbitLabel::B), [0.0, 0.0], 5.0, Direction::Cw);
        assert!(!same_attractor(&ca, &cb, 0.05));
        let t = label(AttractorKind::Torus, [0.0, 0.1], 3.0, Direction::Ccw);
        let c = label(AttractorKind::Chaotic, [0.05, 0.1], 3.0, Direction::Ccw);
        assert!(same_attractor(&t, &c, 0.05));
        assert_eq!(merge_duplicates(&[a.clone(), b.clone(), a.clone(), t, c], 0.05), vec![0, 1, 3]);
    }

    fn arb_label() -> impl Strategy<Value = AttractorLabel> {
        (0usize..3, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..2.0, 0usize..3).prop_map(|(k, x, y, h, d)| {
            let kind = [AttractorKind::FixedPoint, AttractorKind::LimitCycle { period: 1 }, AttractorKind::Torus][k];
            let dir = [Direction::Ccw, Direction::Cw, Direction::Undefined][d];
            label(kind, [x, y], h, dir)
        })
    }

    proptest! {
        #[test]
        fn merging_is_idempotent(labels in prop::collection::vec(arb_label(), 0..20)) {
            let kept: Vec<AttractorLabel> = merge_duplicates(&labels, 0.2).into_iter().map(|i| labels[i].clone()).collect();
            let again = merge_duplicates(&kept, 0.2);
            prop_assert_eq!(again, (0..kept.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn small_sweep_has_monotone_branches() {
        let params = ReservoirParams::seeing_double(30, 5.0, 0.1)
            .with_timing(0.02, 2.0 * PERIOD, 4.0 * PERIOD, 7.0 * PERIOD)
            .unwrap();
        let exp = Experiment::errc(params, 0.1, 3);
        let mut cfg = ContinuationConfig::new(5.0, 0.1, 0.3, 0.1, 77);
        cfg.transient_periods = 5.0;
        cfg.window_periods = 10.0;
        cfg.extended_periods = 0.0;
        let branches = run_continuation(&exp, &cfg, &|_, _| {}).unwrap();
        assert!(!branches.is_empty());
        for b in &branches {
            assert!(b.samples.windows(2).all(|w| w[0].rho < w[1].rho));
        }
        let csv = continuation_csv(&RunHeader::new("c", 0), &exp, &branches);
        assert!(csv.lines().nth(1).unwrap().starts_with("model,branch_id"));
    }
}
