//! Seeing-double drive signals: `u(t) = (s_x cos t + x_cen, s_y sin t + y_cen)`.

use std::fmt;
use std::fmt::Write as _;

use crate::dynamics::{steps_for, Drive};
use crate::{Error, Result};

/// Which of the two counter-rotating circles an orbit is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrbitLabel {
    /// Counter-clockwise, `s_x = s_y`.
    A,
    /// Clockwise, `s_x = −s_y`.
    B,
}

impl fmt::Display for OrbitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrbitLabel::A => "A",
            OrbitLabel::B => "B",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSpec {
    pub s_x: f64,
    pub s_y: f64,
    pub x_cen: f64,
    pub y_cen: f64,
    pub label: OrbitLabel,
}

impl OrbitSpec {
    pub fn center(&self) -> [f64; 2] {
        [self.x_cen, self.y_cen]
    }

    #[inline]
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let (s, c) = t.sin_cos();
        [self.s_x * c + self.x_cen, self.s_y * s + self.y_cen]
    }

    /// `+1` for counter-clockwise, `−1` for clockwise travel.
    pub fn orientation(&self) -> f64 {
        (self.s_x * self.s_y).signum()
    }
}

/// Circle of radius `s`: label A runs counter-clockwise, label B clockwise.
pub fn make_orbit(label: OrbitLabel, s: f64, x_cen: f64, y_cen: f64) -> Result<OrbitSpec> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("s", format!("radius {s} must be positive")));
    }
    let s_x = match label {
        OrbitLabel::A => s,
        OrbitLabel::B => -s,
    };
    Ok(OrbitSpec { s_x, s_y: s, x_cen, y_cen, label })
}

/// The overlapping benchmark pair `(C_A, C_B)`: radius 5, centred at the origin.
pub fn seeing_double_pair() -> (OrbitSpec, OrbitSpec) {
    (
        make_orbit(OrbitLabel::A, 5.0, 0.0, 0.0).expect("valid radius"),
        make_orbit(OrbitLabel::B, 5.0, 0.0, 0.0).expect("valid radius"),
    )
}

/// A sampled orbit that also answers continuous-time queries.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveSignal {
    pub spec: OrbitSpec,
    pub t0: f64,
    pub tau: f64,
    samples: Vec<[f64; 2]>,
}

impl DriveSignal {
    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.tau
    }

    pub fn eval(&self, t: f64) -> [f64; 2] {
        self.spec.eval(t)
    }

    /// `t,x,y` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y\n");
        for (k, [x, y]) in self.samples.iter().enumerate() {
            writeln!(out, "{:.16e},{x:.16e},{y:.16e}", self.time(k)).unwrap();
        }
        out
    }
}

impl Drive for DriveSignal {
    fn dim(&self) -> usize {
        2
    }

    #[inline]
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let [x, y] = self.spec.eval(t);
        out[0] = x;
        out[1] = y;
    }

    fn grid(&self) -> (f64, f64, usize) {
        (self.t0, self.tau, self.samples.len())
    }
}

/// Samples `spec` on the inclusive grid `t0, t0 + τ, …, t_end`.
pub fn sample_signal(spec: &OrbitSpec, t0: f64, t_end: f64, tau: f64) -> Result<DriveSignal> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("{tau} must be positive")));
    }
    if !(t_end > t0) {
        return Err(Error::invalid("t_end", format!("{t_end} must exceed t0 = {t0}")));
    }
    let steps = steps_for(t_end - t0, tau);
    let samples = (0..=steps).map(|k| spec.eval(t0 + k as f64 * tau)).collect();
    Ok(DriveSignal { spec: *spec, t0, tau, samples })
}
