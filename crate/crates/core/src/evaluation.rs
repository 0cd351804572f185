//! Classification of closed-loop predictions.

use std::collections::BTreeSet;
use std::fmt;

use crate::dynamics::{predict_readout, steps_for, PredictionTrajectory, ReservoirTrajectory};
use crate::tasks::{OrbitLabel, OrbitSpec};
use crate::training::TrainedReservoir;
use crate::{Error, Result, PERIOD};

/// Reconstructions with a larger radial spread are not accepted as circles.
pub const ROUNDNESS_THRESHOLD: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Ccw,
    Cw,
    Undefined,
}

impl Direction {
    pub fn expected_for(label: OrbitLabel) -> Self {
        match label {
            OrbitLabel::A => Direction::Ccw,
            OrbitLabel::B => Direction::Cw,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Ccw => "ccw",
            Direction::Cw => "cw",
            Direction::Undefined => "undefined",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitCheck {
    pub roundness: f64,
    pub direction: Direction,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureMode {
    None,
    OnlyA,
    OnlyB,
    Neither,
    Diverged,
}

impl FailureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureMode::None => "none",
            FailureMode::OnlyA => "only_a",
            FailureMode::OnlyB => "only_b",
            FailureMode::Neither => "neither",
            FailureMode::Diverged => "diverged",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfVerdict {
    pub check_a: OrbitCheck,
    pub check_b: OrbitCheck,
    pub multifunctional: bool,
    pub failure_mode: FailureMode,
}

impl MfVerdict {
    pub fn from_checks(check_a: OrbitCheck, check_b: OrbitCheck) -> Self {
        let failure_mode = match (check_a.passed, check_b.passed) {
            (true, true) => FailureMode::None,
            (true, false) => FailureMode::OnlyA,
            (false, true) => FailureMode::OnlyB,
            (false, false) => FailureMode::Neither,
        };
        Self { check_a, check_b, multifunctional: failure_mode == FailureMode::None, failure_mode }
    }

    pub fn diverged(check_a: OrbitCheck, check_b: OrbitCheck) -> Self {
        let fail = |c: OrbitCheck| OrbitCheck { passed: false, ..c };
        Self { check_a: fail(check_a), check_b: fail(check_b), multifunctional: false, failure_mode: FailureMode::Diverged }
    }
}

/// Tunables shared by the classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Time discarded from the start of a prediction before classification.
    pub transient_skip: f64,
    pub roundness_threshold: f64,
    /// Trajectories with a smaller bounding-box diagonal are fixed points.
    pub fixed_point_diameter: f64,
    /// Gap below which Poincaré crossings belong to the same cluster.
    pub cluster_tolerance: f64,
    /// Largest number of crossing clusters still read as a limit cycle.
    pub max_cycle_clusters: usize,
    /// Box-counting slope above which a crossing cloud is chaotic.
    pub chaos_slope: f64,
    /// Minimum post-transient length, in nominal periods, for attractor labels.
    pub min_periods: f64,
    /// Rounding grid for distinct local-maximum values.
    pub maxima_tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            transient_skip: 2.0 * PERIOD,
            roundness_threshold: ROUNDNESS_THRESHOLD,
            fixed_point_diameter: 1e-3,
            cluster_tolerance: 1e-2,
            max_cycle_clusters: 12,
            chaos_slope: 1.2,
            min_periods: 10.0,
            maxima_tolerance: 1e-3,
        }
    }
}

fn post_skip(traj: &PredictionTrajectory, transient_skip: f64) -> Result<PredictionTrajectory> {
    let w = traj.skip_time(transient_skip);
    if w.is_empty() {
        return Err(Error::Range(format!(
            "no samples remain after skipping {transient_skip} of a {}-sample trajectory",
            traj.len()
        )));
    }
    Ok(w)
}

/// Spread `max d − min d` of the distance `d(t) = ‖û(t) − center‖`.
pub fn roundness(traj: &PredictionTrajectory, center: [f64; 2], transient_skip: f64) -> Result<f64> {
    let w = post_skip(traj, transient_skip)?;
    Ok(radial_spread(&w, center))
}

fn radial_spread(w: &PredictionTrajectory, center: [f64; 2]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..w.len() {
        let [x, y] = w.point(k);
        let d = (x - center[0]).hypot(y - center[1]);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi - lo
}

/// Total signed polar angle swept around `center`.
pub fn winding_angle(w: &PredictionTrajectory, center: [f64; 2]) -> f64 {
    let mut total = 0.0;
    for k in 1..w.len() {
        let [x0, y0] = w.point(k - 1);
        let [x1, y1] = w.point(k);
        let (ax, ay) = (x0 - center[0], y0 - center[1]);
        let (bx, by) = (x1 - center[0], y1 - center[1]);
        total += (ax * by - ay * bx).atan2(ax * bx + ay * by);
    }
    total
}

/// Counter-clockwise if more than half a net revolution is swept in the
/// positive sense, clockwise if in the negative sense, otherwise undefined.
pub fn rotation_direction(traj: &PredictionTrajectory, center: [f64; 2], transient_skip: f64) -> Direction {
    let Ok(w) = post_skip(traj, transient_skip) else {
        return Direction::Undefined;
    };
    direction_of_angle(winding_angle(&w, center))
}

fn direction_of_angle(angle: f64) -> Direction {
    if angle > std::f64::consts::PI {
        Direction::Ccw
    } else if angle < -std::f64::consts::PI {
        Direction::Cw
    } else {
        Direction::Undefined
    }
}

/// Roundness about the expected centre and rotation sense against the label.
pub fn classify_orbit(traj: &PredictionTrajectory, expected: &OrbitSpec, transient_skip: f64) -> Result<OrbitCheck> {
    classify_orbit_with(traj, expected, transient_skip, ROUNDNESS_THRESHOLD)
}

pub fn classify_orbit_with(
    traj: &PredictionTrajectory,
    expected: &OrbitSpec,
    transient_skip: f64,
    threshold: f64,
) -> Result<OrbitCheck> {
    let w = post_skip(traj, transient_skip)?;
    let center = expected.center();
    let roundness = radial_spread(&w, center);
    let direction = direction_of_angle(winding_angle(&w, center));
    let passed = roundness < threshold && direction == Direction::expected_for(expected.label) && !w.diverged;
    Ok(OrbitCheck { roundness, direction, passed })
}

/// Runs the predicting reservoir from both training end states up to `t_end`
/// and checks each prediction against its own orbit.
pub fn evaluate_multifunctionality(
    trained: &TrainedReservoir,
    orbits: (&OrbitSpec, &OrbitSpec),
    t_end: f64,
    config: &EvalConfig,
) -> Result<MfVerdict> {
    let p = trained.params();
    let end_steps = steps_for(t_end, p.tau());
    if end_steps <= p.train_steps() {
        return Err(Error::Range(format!("t_end = {t_end} does not exceed t_train = {}", p.t_train())));
    }
    let steps = end_steps - p.train_steps();
    let mut checks = Vec::with_capacity(2);
    let mut diverged = false;
    for orbit in [orbits.0, orbits.1] {
        let seed = trained
            .seed_state(orbit.label)
            .ok_or_else(|| Error::Shape(format!("no seed state for orbit {}", orbit.label)))?;
        let (pred, outcome) = predict_readout(trained, seed, steps)?;
        diverged |= outcome.diverged;
        let check = if pred.len() > steps_for(config.transient_skip, p.tau()) {
            classify_orbit_with(&pred, orbit, config.transient_skip, config.roundness_threshold)?
        } else {
            OrbitCheck { roundness: f64::INFINITY, direction: Direction::Undefined, passed: false }
        };
        checks.push(check);
    }
    Ok(if diverged {
        MfVerdict::diverged(checks[0], checks[1])
    } else {
        MfVerdict::from_checks(checks[0], checks[1])
    })
}

/// Number of distinct local-maximum values of `series`, after rounding each
/// value to a multiple of `value_tolerance`. A flat top counts once.
pub fn unique_local_maxima(series: &[f64], value_tolerance: f64) -> usize {
    let mut seen = BTreeSet::new();
    let n = series.len();
    let mut i = 1;
    while i + 1 < n {
        if series[i] > series[i - 1] {
            let mut j = i;
            while j + 1 < n && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < n && series[j + 1] < series[i] {
                seen.insert((series[i] / value_tolerance).round() as i64);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    seen.len()
}

/// [`unique_local_maxima`] for every neuron of a reservoir trajectory.
pub fn unique_local_maxima_counts(traj: &ReservoirTrajectory, value_tolerance: f64) -> Vec<usize> {
    (0..traj.n()).map(|i| unique_local_maxima(&traj.neuron(i), value_tolerance)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttractorKind {
    FixedPoint,
    /// Periodic orbit whose section crossings fall into `period` clusters.
    LimitCycle { period: usize },
    Torus,
    Chaotic,
    ReconstructedCircle(OrbitLabel),
    Diverged,
}

impl AttractorKind {
    pub fn name(&self) -> String {
        match self {
            AttractorKind::FixedPoint => "fixed_point".into(),
            AttractorKind::LimitCycle { period } => format!("limit_cycle_{period}"),
            AttractorKind::Torus => "torus".into(),
            AttractorKind::Chaotic => "chaotic".into(),
            AttractorKind::ReconstructedCircle(l) => format!("circle_{l}"),
            AttractorKind::Diverged => "diverged".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractorLabel {
    pub kind: AttractorKind,
    pub mean: [f64; 2],
    /// Radial spread about the benchmark centre.
    pub roundness: f64,
    /// Rotation sense about the trajectory's own mean point.
    pub direction: Direction,
    pub crossings: usize,
    pub diameter: f64,
    /// Bounding box `[x_min, x_max, y_min, y_max]` of the classified window.
    pub bbox: [f64; 4],
}

/// Upward crossings of the vertical line `x = x_section`, as interpolated `y` values.
pub fn section_crossings(w: &PredictionTrajectory, x_section: f64) -> Vec<f64> {
    let mut ys = Vec::new();
    for k in 1..w.len() {
        let [x0, y0] = w.point(k - 1);
        let [x1, y1] = w.point(k);
        if x0 < x_section && x1 >= x_section {
            let s = (x_section - x0) / (x1 - x0);
            ys.push(y0 + s * (y1 - y0));
        }
    }
    ys
}

/// Sizes of the clusters formed by chaining sorted values closer than `tol`.
pub fn cluster_sizes(values: &[f64], tol: f64) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        if i == 0 || v - sorted[i - 1] > tol {
            sizes.push(1);
        } else {
            *sizes.last_mut().unwrap() += 1;
        }
    }
    sizes
}

/// Box-counting slope of a planar point set between grid sizes `L/4` and
/// `L/16`, with `L` the larger side of the bounding box.
pub fn box_counting_slope(points: &[[f64; 2]]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for [x, y] in points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let side = (x1 - x0).max(y1 - y0);
    if side <= 0.0 {
        return 0.0;
    }
    let count = |cells: f64| {
        let eps = side / cells;
        points
            .iter()
            .map(|[x, y]| (((x - x0) / eps).floor() as i64, ((y - y0) / eps).floor() as i64))
            .collect::<BTreeSet<_>>()
            .len() as f64
    };
    (count(16.0) / count(4.0)).ln() / 4f64.ln()
}

/// Coarse label of the attractor a prediction settles on.
///
/// Fixed point when the window's bounding-box diagonal is tiny; reconstructed
/// circle when either orbit check passes; otherwise the upward crossings of
/// the vertical line through the window's mean decide: a few repeated
/// clusters make a limit cycle, and a spread of crossings is a torus or chaos
/// depending on the box-counting slope of the first-return pairs
/// `(y_k, y_{k+1})`.
pub fn classify_attractor(
    pred: &PredictionTrajectory,
    expected: (&OrbitSpec, &OrbitSpec),
    config: &EvalConfig,
) -> Result<AttractorLabel> {
    let w = post_skip(pred, config.transient_skip)?;
    let needed = steps_for(config.min_periods * PERIOD, w.tau);
    if !w.diverged && w.len() < needed {
        return Err(Error::Range(format!(
            "classification needs {} samples after the transient, got {}",
            needed,
            w.len()
        )));
    }

    let n = w.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut bbox = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for k in 0..w.len() {
        let [x, y] = w.point(k);
        sx += x;
        sy += y;
        bbox = [bbox[0].min(x), bbox[1].max(x), bbox[2].min(y), bbox[3].max(y)];
    }
    let mean = [sx / n, sy / n];
    let diameter = (bbox[1] - bbox[0]).hypot(bbox[3] - bbox[2]);
    let roundness = radial_spread(&w, expected.0.center());
    let direction = direction_of_angle(winding_angle(&w, mean));
    let crossings = section_crossings(&w, mean[0]);
    let label = |kind| AttractorLabel { kind, mean, roundness, direction, crossings: crossings.len(), diameter, bbox };

    if w.diverged {
        return Ok(label(AttractorKind::Diverged));
    }
    if diameter < config.fixed_point_diameter {
        return Ok(label(AttractorKind::FixedPoint));
    }
    for orbit in [expected.0, expected.1] {
        if classify_orbit_with(&w, orbit, 0.0, config.roundness_threshold)?.passed {
            return Ok(label(AttractorKind::ReconstructedCircle(orbit.label)));
        }
    }
    if crossings.len() < 2 {
        // No recurrent motion about the mean within the window: a slow drift
        // towards a fixed point. Also leaves no return pairs to classify.
        return Ok(label(AttractorKind::FixedPoint));
    }
    let sizes = cluster_sizes(&crossings, config.cluster_tolerance);
    if sizes.len() <= config.max_cycle_clusters && sizes.iter().all(|s| *s >= 2) {
        return Ok(label(AttractorKind::LimitCycle { period: sizes.len() }));
    }
    let pairs: Vec<[f64; 2]> = crossings.windows(2).map(|p| [p[0], p[1]]).collect();
    let kind = if box_counting_slope(&pairs) > config.chaos_slope { AttractorKind::Chaotic } else { AttractorKind::Torus };
    Ok(label(kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_orbit, seeing_double_pair};

    fn trace(f: impl Fn(f64) -> [f64; 2], periods: f64) -> PredictionTrajectory {
        let tau = 0.01;
        let steps = (periods * PERIOD / tau) as usize;
        let pts: Vec<[f64; 2]> = (0..=steps).map(|k| f(k as f64 * tau)).collect();
        PredictionTrajectory::from_points(0.0, tau, &pts)
    }

    #[test]
    fn roundness_examples() {
        let circle = trace(|t| [5.0 * t.cos(), 5.0 * t.sin()], 3.0);
        assert!(roundness(&circle, [0.0, 0.0], 0.0).unwrap() < 1e-12);
        let ellipse = trace(|t| [5.0 * t.cos(), 4.0 * t.sin()], 3.0);
        assert!((roundness(&ellipse, [0.0, 0.0], 0.0).unwrap() - 1.0).abs() < 1e-6);
        let fixed = trace(|_| [0.0, 0.0], 1.0);
        assert_eq!(roundness(&fixed, [0.0, 0.0], 0.0).unwrap(), 0.0);
        assert!(roundness(&fixed, [0.0, 0.0], 100.0).is_err());
    }

    #[test]
    fn direction_examples() {
        let a = trace(|t| [5.0 * t.cos(), 5.0 * t.sin()], 2.0);
        let b = trace(|t| [-5.0 * t.cos(), 5.0 * t.sin()], 2.0);
        let c = trace(|_| [1.0, 1.0], 2.0);
        assert_eq!(rotation_direction(&a, [0.0, 0.0], 0.0), Direction::Ccw);
        assert_eq!(rotation_direction(&b, [0.0, 0.0], 0.0), Direction::Cw);
        assert_eq!(rotation_direction(&c, [0.0, 0.0], 0.0), Direction::Undefined);
    }

    #[test]
    fn orbit_checks() {
        let (oa, ob) = seeing_double_pair();
        let a = trace(|t| oa.eval(t), 3.0);
        let pass = classify_orbit(&a, &oa, 0.0).unwrap();
        assert!(pass.passed);
        assert!(pass.roundness < 1e-12);
        assert!(!classify_orbit(&a, &ob, 0.0).unwrap().passed);
        let wobble = trace(|t| {
            let r = 5.0 + 0.2 * (3.0 * t).sin();
            [r * t.cos(), r * t.sin()]
        }, 3.0);
        let check = classify_orbit(&wobble, &oa, 0.0).unwrap();
        assert!((check.roundness - 0.4).abs() < 1e-6, "{}", check.roundness);
        assert!(!check.passed);
    }

    #[test]
    fn verdict_failure_modes() {
        let ok = OrbitCheck { roundness: 0.0, direction: Direction::Ccw, passed: true };
        let bad = OrbitCheck { roundness: 1.0, direction: Direction::Undefined, passed: false };
        assert_eq!(MfVerdict::from_checks(ok, ok).failure_mode, FailureMode::None);
        assert!(MfVerdict::from_checks(ok, ok).multifunctional);
        assert_eq!(MfVerdict::from_checks(ok, bad).failure_mode, FailureMode::OnlyA);
        assert_eq!(MfVerdict::from_checks(bad, ok).failure_mode, FailureMode::OnlyB);
        assert_eq!(MfVerdict::from_checks(bad, bad).failure_mode, FailureMode::Neither);
        let d = MfVerdict::diverged(ok, ok);
        assert!(!d.multifunctional && !d.check_a.passed);
    }

    #[test]
    fn maxima_examples() {
        let sine: Vec<f64> = (0..5000).map(|k| (k as f64 * 0.01).sin()).collect();
        assert_eq!(unique_local_maxima(&sine, 1e-3), 1);
        assert_eq!(unique_local_maxima(&[0.3; 100], 1e-3), 0);
        // Plateau counts once.
        assert_eq!(unique_local_maxima(&[0.0, 1.0, 1.0, 1.0, 0.0, 0.5, 0.0], 1e-3), 2);
        // Rising edge at the end is not a maximum.
        assert_eq!(unique_local_maxima(&[0.0, 1.0, 2.0], 1e-3), 0);
    }

    #[test]
    fn attractor_labels() {
        let (oa, ob) = seeing_double_pair();
        let cfg = EvalConfig { transient_skip: 0.0, ..Default::default() };
        let fixed = trace(|_| [0.3, -1.0], 11.0);
        assert_eq!(classify_attractor(&fixed, (&oa, &ob), &cfg).unwrap().kind, AttractorKind::FixedPoint);
        // A slow swing with a single upward section crossing is still a drift.
        let drift = trace(|t| [0.3 + 0.01 * (0.1 * t).cos(), -1.0 + 0.01 * (0.1 * t).sin()], 11.0);
        let ld = classify_attractor(&drift, (&oa, &ob), &cfg).unwrap();
        assert_eq!((ld.kind, ld.crossings), (AttractorKind::FixedPoint, 1));
        let b = trace(|t| ob.eval(t), 11.0);
        let lb = classify_attractor(&b, (&oa, &ob), &cfg).unwrap();
        assert_eq!(lb.kind, AttractorKind::ReconstructedCircle(OrbitLabel::B));
        // A small circle off-centre is a period-1 limit cycle.
        let small = make_orbit(OrbitLabel::A, 1.0, 2.0, 2.0).unwrap();
        let lc = trace(|t| small.eval(t), 11.0);
        assert_eq!(
            classify_attractor(&lc, (&oa, &ob), &cfg).unwrap().kind,
            AttractorKind::LimitCycle { period: 1 }
        );
        let short = trace(|t| small.eval(t), 3.0);
        assert!(classify_attractor(&short, (&oa, &ob), &cfg).is_err());
    }

    #[test]
    fn box_counting_separates_curves_from_clouds() {
        let curve: Vec<[f64; 2]> = (0..400).map(|k| {
            let t = k as f64 * 0.618_033_988 * std::f64::consts::TAU;
            [t.cos(), t.sin()]
        }).collect();
        let s = box_counting_slope(&curve);
        assert!((0.7..=1.2).contains(&s), "{s}");
        let mut x = 0.123_456_f64;
        let cloud: Vec<[f64; 2]> = (0..400).map(|_| {
            x = (x * 9301.0 + 0.4929).fract();
            let a = x;
            x = (x * 9301.0 + 0.4929).fract();
            [a, x]
        }).collect();
        assert!(box_counting_slope(&cloud) > 1.2);
    }
}
