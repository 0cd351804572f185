//! Listening and predicting reservoir dynamics.
//!
//! Both phases integrate `ṙ = γ[−r + tanh(M r + σ W_in u)]` with classical
//! fixed-step RK4. While listening, `u` is an external drive evaluated
//! analytically at every stage time; while predicting, `u` is replaced by the
//! trained readout `W_out q(r)` of the current stage state.

use std::fmt::Write as _;

use crate::topology::{AdjacencyMatrix, CsrMatrix, InputMatrix};
use crate::training::{ReadoutMatrix, TrainedReservoir};
use crate::{Error, Result, PERIOD};

/// Scalar hyperparameters of one reservoir configuration.
///
/// Window times are stored as step counts so that every window boundary is an
/// exact multiple of `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirParams {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    tau: f64,
    listen_steps: usize,
    train_steps: usize,
    predict_end_steps: usize,
}

impl ReservoirParams {
    /// Defaults for the seeing-double task: `d = 2`, `σ = 0.2`, `β = 0.01`,
    /// `τ = 0.01`, windows `6T / 15T / 27T` with `T = 2π`.
    pub fn seeing_double(n: usize, gamma: f64, rho: f64) -> Self {
        let tau = 0.01;
        Self {
            n,
            d: 2,
            gamma,
            sigma: 0.2,
            rho,
            beta: 0.01,
            tau,
            listen_steps: steps_for(6.0 * PERIOD, tau),
            train_steps: steps_for(15.0 * PERIOD, tau),
            predict_end_steps: steps_for(27.0 * PERIOD, tau),
        }
    }

    /// Sets the step size and window ends; each time is rounded to the
    /// nearest multiple of `tau`.
    pub fn with_timing(mut self, tau: f64, t_listen: f64, t_train: f64, t_predict_end: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::invalid("tau", format!("{tau} must be positive")));
        }
        for (name, t) in [("t_listen", t_listen), ("t_train", t_train), ("t_predict_end", t_predict_end)] {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::invalid(name, format!("{t} must be finite and nonnegative")));
            }
        }
        self.tau = tau;
        self.listen_steps = steps_for(t_listen, tau);
        self.train_steps = steps_for(t_train, tau);
        self.predict_end_steps = steps_for(t_predict_end, tau);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "reservoir needs at least one node"));
        }
        if self.d == 0 {
            return Err(Error::invalid("d", "input dimension must be at least 1"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", format!("{} must be positive", self.gamma)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("beta", format!("{} must be nonnegative", self.beta)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("{} must be nonnegative", self.sigma)));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid("rho", format!("{} must be nonnegative", self.rho)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau", format!("{} must be positive", self.tau)));
        }
        if !(self.listen_steps < self.train_steps && self.train_steps < self.predict_end_steps) {
            return Err(Error::invalid(
                "t_listen",
                format!(
                    "windows must satisfy t_listen < t_train < t_predict_end (got {}, {}, {})",
                    self.t_listen(),
                    self.t_train(),
                    self.t_predict_end()
                ),
            ));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn listen_steps(&self) -> usize {
        self.listen_steps
    }
    pub fn train_steps(&self) -> usize {
        self.train_steps
    }
    pub fn predict_end_steps(&self) -> usize {
        self.predict_end_steps
    }
    pub fn t_listen(&self) -> f64 {
        self.listen_steps as f64 * self.tau
    }
    pub fn t_train(&self) -> f64 {
        self.train_steps as f64 * self.tau
    }
    pub fn t_predict_end(&self) -> f64 {
        self.predict_end_steps as f64 * self.tau
    }
}

/// Number of `tau` steps closest to `t`.
pub fn steps_for(t: f64, tau: f64) -> usize {
    (t / tau).round() as usize
}

/// A continuous input signal that can be queried at RK4 stage times.
pub trait Drive {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
    /// `(t0, tau, samples)` of the sampling grid the signal was built on.
    fn grid(&self) -> (f64, f64, usize);
}

/// Scratch space for classical RK4 steps of a fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }

    /// Advances `state` from `t` to `t + tau` in place.
    ///
    /// `f(t, x, dx)` writes the vector field at `(t, x)` into `dx`. A
    /// non-finite stage derivative aborts the step and leaves `state`
    /// untouched.
    pub fn step<F>(&mut self, mut f: F, t: f64, state: &mut [f64], tau: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * tau;
        let stage_times = [t, t + half, t + half, t + tau];
        let stage_scale = [0.0, half, half, tau];
        for s in 0..4 {
            let (done, rest) = self.k.split_at_mut(s);
            let ks = &mut rest[0];
            if s == 0 {
                f(stage_times[0], state, ks);
            } else {
                let prev = &done[s - 1];
                for ((x, y), dk) in self.tmp.iter_mut().zip(state.iter()).zip(prev) {
                    *x = y + stage_scale[s] * dk;
                }
                f(stage_times[s], &self.tmp, ks);
            }
            if ks.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { stage: s + 1, t });
            }
        }
        let sixth = tau / 6.0;
        let [k1, k2, k3, k4] = &self.k;
        for i in 0..state.len() {
            state[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(f: F, t: f64, state: &[f64], tau: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut out = state.to_vec();
    Rk4::new(state.len()).step(f, t, &mut out, tau)?;
    Ok(out)
}

/// Reservoir activations sampled every `tau` from `t0`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirTrajectory {
    pub t0: f64,
    pub tau: f64,
    n: usize,
    states: Vec<f64>,
}

impl ReservoirTrajectory {
    pub fn new(t0: f64, tau: f64, n: usize) -> Self {
        Self { t0, tau, n, states: Vec::new() }
    }

    pub fn from_rows(t0: f64, tau: f64, rows: &[Vec<f64>]) -> Self {
        let n = rows.first().map_or(0, Vec::len);
        let mut traj = Self::new(t0, tau, n);
        for r in rows {
            traj.push(r);
        }
        traj
    }

    pub fn push(&mut self, r: &[f64]) {
        debug_assert_eq!(r.len(), self.n);
        self.states.extend_from_slice(r);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        if self.n == 0 { 0 } else { self.states.len() / self.n }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.row(self.len() - 1))
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.tau
    }

    /// Row index of time `t`, if `t` lies on the grid within half a step.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.tau).round();
        (k >= 0.0 && (k as usize) < self.len()).then_some(k as usize)
    }

    /// Time series of neuron `i`.
    pub fn neuron(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.states[k * self.n + i]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.states.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// `t,r_0,...,r_{n-1}` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.n {
            write!(out, ",r_{i}").unwrap();
        }
        out.push('\n');
        for k in 0..self.len() {
            write!(out, "{:.16e}", self.time(k)).unwrap();
            for v in self.row(k) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Readout predictions `û(t)` sampled every `tau` from `t0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrajectory {
    pub t0: f64,
    pub tau: f64,
    d: usize,
    values: Vec<f64>,
    /// Set when integration stopped early on a non-finite value.
    pub diverged: bool,
}

impl PredictionTrajectory {
    pub fn new(t0: f64, tau: f64, d: usize) -> Self {
        Self { t0, tau, d, values: Vec::new(), diverged: false }
    }

    /// Builds a two-dimensional trajectory from points.
    pub fn from_points(t0: f64, tau: f64, points: &[[f64; 2]]) -> Self {
        let mut p = Self::new(t0, tau, 2);
        for pt in points {
            p.push(pt);
        }
        p
    }

    pub fn push(&mut self, u: &[f64]) {
        debug_assert_eq!(u.len(), self.d);
        self.values.extend_from_slice(u);
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        if self.d == 0 { 0 } else { self.values.len() / self.d }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.d..(k + 1) * self.d]
    }

    /// `(x, y)` of sample `k`; requires `d == 2`.
    pub fn point(&self, k: usize) -> [f64; 2] {
        assert_eq!(self.d, 2, "planar access needs a two-dimensional prediction");
        [self.values[2 * k], self.values[2 * k + 1]]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.tau
    }

    /// Same trajectory with the first `skip` time units dropped.
    pub fn skip_time(&self, skip: f64) -> Self {
        let k = steps_for(skip.max(0.0), self.tau).min(self.len());
        Self {
            t0: self.t0 + k as f64 * self.tau,
            tau: self.tau,
            d: self.d,
            values: self.values[k * self.d..].to_vec(),
            diverged: self.diverged,
        }
    }

    /// `t,x,y` (or `t,u_0,...`) with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        if self.d == 2 {
            out.push_str(",x,y");
        } else {
            for i in 0..self.d {
                write!(out, ",u_{i}").unwrap();
            }
        }
        out.push('\n');
        for k in 0..self.len() {
            write!(out, "{:.16e}", self.time(k)).unwrap();
            for v in self.row(k) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates `γ[−r + tanh(M r + σ W_in u)]`.
struct ReservoirField<'a> {
    m: &'a CsrMatrix,
    w_in: &'a InputMatrix,
    gamma: f64,
    sigma: f64,
    pre: Vec<f64>,
}

impl<'a> ReservoirField<'a> {
    fn new(m: &'a CsrMatrix, w_in: &'a InputMatrix, gamma: f64, sigma: f64) -> Self {
        Self { m, w_in, gamma, sigma, pre: vec![0.0; m.n()] }
    }

    #[inline]
    fn eval(&mut self, r: &[f64], u: &[f64], out: &mut [f64]) {
        self.m.matvec(r, &mut self.pre);
        let cols = self.w_in.columns();
        let w = self.w_in.values();
        let (g, s) = (self.gamma, self.sigma);
        for i in 0..out.len() {
            out[i] = g * (-r[i] + (self.pre[i] + s * w[i] * u[cols[i]]).tanh());
        }
    }
}

fn check_shapes(m: &AdjacencyMatrix, w_in: &InputMatrix, params: &ReservoirParams) -> Result<()> {
    if m.n() != params.n || w_in.n() != params.n {
        return Err(Error::Shape(format!(
            "reservoir size {} but M is {}x{} and W_in has {} rows",
            params.n,
            m.n(),
            m.n(),
            w_in.n()
        )));
    }
    if w_in.d() != params.d {
        return Err(Error::Shape(format!("W_in has {} columns, expected d = {}", w_in.d(), params.d)));
    }
    Ok(())
}

fn check_alignment<U: Drive + ?Sized>(u: &U, params: &ReservoirParams) -> Result<()> {
    if u.dim() != params.d {
        return Err(Error::Alignment(format!("signal dimension {} but d = {}", u.dim(), params.d)));
    }
    let (t0, tau, samples) = u.grid();
    if (tau - params.tau()).abs() > 1e-12 * params.tau() {
        return Err(Error::Alignment(format!("signal step {tau} differs from integration step {}", params.tau())));
    }
    if t0.abs() > 1e-12 {
        return Err(Error::Alignment(format!("signal starts at t = {t0}, listening starts at 0")));
    }
    if samples < params.train_steps() + 1 {
        return Err(Error::Alignment(format!(
            "signal has {samples} samples, listening to t_train needs {}",
            params.train_steps() + 1
        )));
    }
    Ok(())
}

/// Drives the reservoir from `r(0) = 0` to `t_train`, handing every grid state
/// `(step, r)` to `observe`. Returns `r(t_train)`.
pub fn drive_listening_observed<U, F>(
    m: &AdjacencyMatrix,
    w_in: &InputMatrix,
    params: &ReservoirParams,
    u: &U,
    mut observe: F,
) -> Result<Vec<f64>>
where
    U: Drive + ?Sized,
    F: FnMut(usize, &[f64]),
{
    check_shapes(m, w_in, params)?;
    check_alignment(u, params)?;
    let n = params.n;
    let tau = params.tau();
    let mut field = ReservoirField::new(m.entries(), w_in, params.gamma, params.sigma);
    let mut rk = Rk4::new(n);
    let mut r = vec![0.0; n];
    let mut ubuf = vec![0.0; params.d];
    observe(0, &r);
    for k in 0..params.train_steps() {
        let t = k as f64 * tau;
        rk.step(
            |s, x, dx| {
                u.eval_into(s, &mut ubuf);
                field.eval(x, &ubuf, dx);
            },
            t,
            &mut r,
            tau,
        )?;
        observe(k + 1, &r);
    }
    Ok(r)
}

/// Full listening trajectory on `[0, t_train]`.
pub fn drive_listening<U: Drive + ?Sized>(
    m: &AdjacencyMatrix,
    w_in: &InputMatrix,
    params: &ReservoirParams,
    u: &U,
) -> Result<ReservoirTrajectory> {
    let mut traj = ReservoirTrajectory::new(0.0, params.tau(), params.n);
    traj.states.reserve((params.train_steps() + 1) * params.n);
    drive_listening_observed(m, w_in, params, u, |_, r| traj.push(r))?;
    Ok(traj)
}

/// Closed-loop vector field `γ[−r + tanh(M r + σ W_in W_out q(r))]`.
pub struct PredictingSystem<'a> {
    field: ReservoirField<'a>,
    w_out: &'a ReadoutMatrix,
    u: Vec<f64>,
}

impl<'a> PredictingSystem<'a> {
    pub fn new(trained: &'a TrainedReservoir) -> Self {
        let p = trained.params();
        Self {
            field: ReservoirField::new(trained.m().entries(), trained.w_in(), p.gamma, p.sigma),
            w_out: trained.w_out(),
            u: vec![0.0; p.d],
        }
    }

    #[inline]
    pub fn eval(&mut self, r: &[f64], out: &mut [f64]) {
        self.w_out.apply(r, &mut self.u);
        self.field.eval(r, &self.u, out);
    }
}

/// How a closed-loop run ended.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionOutcome {
    pub final_state: Vec<f64>,
    /// Number of completed steps.
    pub steps: usize,
    pub diverged: bool,
}

/// Integrates the predicting reservoir for `steps` steps from `r0`, handing
/// `(step, r̂, û)` to `observe` at every grid point including the start.
///
/// A non-finite readout or stage value stops the run and sets `diverged`.
pub fn predict_observed<F>(trained: &TrainedReservoir, r0: &[f64], steps: usize, mut observe: F) -> Result<PredictionOutcome>
where
    F: FnMut(usize, &[f64], &[f64]),
{
    let p = trained.params();
    if r0.len() != p.n {
        return Err(Error::Shape(format!("initial state has length {}, reservoir has {}", r0.len(), p.n)));
    }
    let tau = p.tau();
    let mut system = PredictingSystem::new(trained);
    let mut rk = Rk4::new(p.n);
    let mut r = r0.to_vec();
    let mut u = vec![0.0; p.d];

    trained.w_out().apply(&r, &mut u);
    if u.iter().any(|v| !v.is_finite()) {
        return Ok(PredictionOutcome { final_state: r, steps: 0, diverged: true });
    }
    observe(0, &r, &u);
    for k in 0..steps {
        if rk.step(|_, x, dx| system.eval(x, dx), k as f64 * tau, &mut r, tau).is_err() {
            return Ok(PredictionOutcome { final_state: r, steps: k, diverged: true });
        }
        trained.w_out().apply(&r, &mut u);
        if u.iter().any(|v| !v.is_finite()) || r.iter().any(|v| !v.is_finite()) {
            return Ok(PredictionOutcome { final_state: r, steps: k + 1, diverged: true });
        }
        observe(k + 1, &r, &u);
    }
    Ok(PredictionOutcome { final_state: r, steps, diverged: false })
}

/// Closed-loop run from `r0` at `t_train` to `t_end`, recording both the
/// prediction and the reservoir state.
pub fn run_prediction(
    trained: &TrainedReservoir,
    r0: &[f64],
    t_end: f64,
) -> Result<(PredictionTrajectory, ReservoirTrajectory)> {
    let p = trained.params();
    let t0 = p.t_train();
    if !(t_end > t0) {
        return Err(Error::Range(format!("prediction end {t_end} must exceed t_train = {t0}")));
    }
    let steps = steps_for(t_end, p.tau()) - p.train_steps();
    let mut pred = PredictionTrajectory::new(t0, p.tau(), p.d);
    let mut res = ReservoirTrajectory::new(t0, p.tau(), p.n);
    let outcome = predict_observed(trained, r0, steps, |_, r, u| {
        pred.push(u);
        res.push(r);
    })?;
    pred.diverged = outcome.diverged;
    Ok((pred, res))
}

/// Prediction only, from `t_train` for `steps` steps.
pub fn predict_readout(trained: &TrainedReservoir, r0: &[f64], steps: usize) -> Result<(PredictionTrajectory, PredictionOutcome)> {
    let p = trained.params();
    let mut pred = PredictionTrajectory::new(p.t_train(), p.tau(), p.d);
    pred.values.reserve((steps + 1) * p.d);
    let outcome = predict_observed(trained, r0, steps, |_, _, u| pred.push(u))?;
    pred.diverged = outcome.diverged;
    Ok((pred, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_leaves_state() {
        let out = rk4_step(|_, _, dx| dx.iter_mut().for_each(|v| *v = 0.0), 0.0, &[1.0, 2.0], 0.01).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn single_decay_step_matches_exponential() {
        let out = rk4_step(|_, x, dx| dx[0] = -x[0], 0.0, &[1.0], 0.01).unwrap();
        assert!((out[0] - (-0.01f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn non_finite_stage_is_reported() {
        let err = rk4_step(|t, x, dx| dx[0] = if t > 0.0 { f64::NAN } else { x[0] }, 0.0, &[1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Divergence { stage: 2, .. }));
    }

    #[test]
    fn default_windows() {
        let p = ReservoirParams::seeing_double(10, 5.0, 1.4);
        assert_eq!(p.listen_steps(), 3770);
        assert_eq!(p.train_steps(), 9425);
        assert_eq!(p.predict_end_steps(), 16965);
        assert!(p.validate().is_ok());
        assert_eq!(p.t_train(), 9425.0 * 0.01);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = ReservoirParams::seeing_double(10, 5.0, 1.4);
        assert!(p.clone().with_timing(-1.0, 1.0, 2.0, 3.0).is_err());
        assert!(p.clone().with_timing(0.01, 2.0, 1.0, 3.0).is_err());
        let mut q = p.clone();
        q.gamma = 0.0;
        assert!(q.validate().is_err());
        let mut q = p;
        q.beta = -1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn skip_time_drops_rows() {
        let pts: Vec<[f64; 2]> = (0..10).map(|k| [k as f64, 0.0]).collect();
        let p = PredictionTrajectory::from_points(1.0, 0.5, &pts);
        let s = p.skip_time(1.0);
        assert_eq!(s.len(), 8);
        assert_eq!(s.point(0), [2.0, 0.0]);
        assert_eq!(s.t0, 2.0);
    }
}
