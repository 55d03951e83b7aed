//! Weighted energies `int l^beta e^{alpha t} dt`, the density ratio
//! `Theta(s) = omega e^{-alpha s} E(-inf, s)` and the monotonicity formula
//! `Theta(s2) - Theta(s1) = p omega int_{s1}^{s2} l^{beta-1} |u'|^2 dt`.
//!
//! Improper integrals are closed by freezing the trajectory at its earliest
//! sample, which is exact for trajectories starting at rest at a point they
//! would occupy for all earlier times.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dynamics::{DenseSegment, Model, State, Trajectory};
use crate::error::{Error, Result};
use crate::potential::potential_sup_bounds;
use crate::quadrature::{gauss7_composite, MAX_PANEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    None,
    ConstantExtension,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySegment {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub tail_mode: TailMode,
}

fn lagrangian(model: &Model, s: &State) -> f64 {
    model.ell(s).powf(model.derived.beta)
}

fn earliest(traj: &Trajectory) -> &State {
    if traj.is_forward() {
        &traj.first().state
    } else {
        &traj.last().state
    }
}

/// Closed tail `int_{-inf}^{t0} l(u(t0))^beta e^{alpha t} dt` scaled by
/// `e^{-alpha s}`.
fn tail_scaled(model: &Model, start: &State, s: f64) -> f64 {
    let alpha = model.derived.alpha;
    lagrangian(model, start) * (alpha * (start.t - s)).exp() / alpha
}

pub fn segment_energy(traj: &Trajectory, a: f64, b: f64, tail_mode: TailMode) -> Result<EnergySegment> {
    let model = &traj.model;
    let alpha = model.derived.alpha;
    if a > b {
        return Err(Error::InvalidInput(format!("segment [{a}, {b}] is reversed")));
    }
    let (lo, hi) = traj.span();
    let mut value = 0.0;
    let mut start = a;
    if a < lo {
        if tail_mode != TailMode::ConstantExtension || b > hi {
            return Err(Error::OutOfSpan { a, b, lo, hi });
        }
        let s0 = earliest(traj);
        let end = b.min(s0.t);
        value += lagrangian(model, s0) / alpha * ((alpha * end).exp() - if a.is_finite() { (alpha * a).exp() } else { 0.0 });
        start = lo;
    }
    if b > start {
        value += traj.integrate(start, b, |s| lagrangian(model, s) * (alpha * s.t).exp())?;
    }
    Ok(EnergySegment { a, b, value, tail_mode })
}

/// Segments of the dense output sorted by increasing time, as `(lo, hi, segment)`.
fn pieces(traj: &Trajectory) -> Vec<(f64, f64, &DenseSegment)> {
    let mut out: Vec<_> = traj.segments.iter().map(|s| (s.t0.min(s.t1), s.t0.max(s.t1), s)).filter(|p| p.1 > p.0).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

/// `Theta(s) = omega e^{-alpha s} int_{-inf}^s l^beta e^{alpha t} dt` with
/// constant-extension tail closure.
pub fn density_ratio(traj: &Trajectory, s: f64) -> Result<f64> {
    let profile = density_profile(traj, &[s])?;
    Ok(profile.theta_values[0])
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub s_values: Vec<f64>,
    pub theta_values: Vec<f64>,
}

impl DensityProfile {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "s,theta_ratio")?;
        for (s, th) in self.s_values.iter().zip(&self.theta_values) {
            writeln!(w, "{s:.16e},{th:.16e}")?;
        }
        Ok(())
    }

    /// Largest relative decrease between consecutive values.
    pub fn max_relative_decrease(&self) -> f64 {
        self.theta_values
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Density ratios at the given (ascending) log radii, accumulated in one
/// pass with the scaled recursion `J(t + h) = e^{-alpha h} J(t) + ...` so
/// that `e^{alpha t}` never overflows.
pub fn density_profile(traj: &Trajectory, s_values: &[f64]) -> Result<DensityProfile> {
    let model = &traj.model;
    let alpha = model.derived.alpha;
    let omega = model.derived.omega;
    let (lo, hi) = traj.span();
    if s_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("density profile abscissae must be ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (s_values.first(), s_values.last()) {
        if first < lo || last > hi {
            return Err(Error::OutOfSpan { a: first, b: last, lo, hi });
        }
    }
    let start = earliest(traj);
    let f = |seg: &DenseSegment, t: f64, anchor: f64| {
        let st = seg.state(t);
        lagrangian(model, &st) * (alpha * (t - anchor)).exp()
    };

    let mut out = DensityProfile { s_values: s_values.to_vec(), theta_values: Vec::with_capacity(s_values.len()) };
    let mut acc_t = start.t;
    let mut acc = tail_scaled(model, start, start.t);
    let segs = pieces(traj);
    let mut idx = 0;
    for &s in s_values {
        while idx < segs.len() && segs[idx].1 <= s {
            let (a, b, seg) = segs[idx];
            let a = a.max(acc_t);
            if b > a {
                acc = acc * (-alpha * (b - a)).exp() + gauss7_composite(a, b, MAX_PANEL, |t| f(seg, t, b));
                acc_t = b;
            }
            idx += 1;
        }
        let mut value = acc * (-alpha * (s - acc_t)).exp();
        if idx < segs.len() && s > acc_t {
            let seg = segs[idx].2;
            value += gauss7_composite(acc_t, s, MAX_PANEL, |t| f(seg, t, s));
        }
        out.theta_values.push(omega * value);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// Both sides of the monotonicity formula, each by its own quadrature.
pub fn monotonicity_check(traj: &Trajectory, s1: f64, s2: f64) -> Result<MonotonicityCheck> {
    if !(s1 < s2) {
        return Err(Error::InvalidInput(format!("need s1 < s2, got {s1} and {s2}")));
    }
    let model = &traj.model;
    let beta = model.derived.beta;
    let profile = density_profile(traj, &[s1, s2])?;
    let lhs = profile.theta_values[1] - profile.theta_values[0];
    let rhs = model.params.p
        * model.derived.omega
        * traj.integrate(s1, s2, |s| model.ell(s).powf(beta - 1.0) * s.speed_sq())?;
    Ok(MonotonicityCheck { lhs, rhs, rel_err: (lhs - rhs).abs() / (1.0 + lhs.abs()) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    /// `sup_t B0 |u'(t)|^{p-1}`, which is `B0 |r u_r|^{p-1}` in radial terms.
    pub sup_scaled_speed: f64,
    /// `sup|grad V|` for the model's potential.
    pub grad_v_sup: f64,
    /// `omega E(-inf, R)` with tail closure.
    pub energy: f64,
    /// Log radius `R` at which the energy was taken.
    pub energy_radius: f64,
    pub grad_v_times_energy: f64,
    /// `B0 (max Bhat / (2 beta - 1))^{(p-1)/2}` when `H <= 0` on every sample.
    pub h1_bound: Option<f64>,
    pub bounded: bool,
}

/// Measures the quantities of the gradient bound `B0 |r u'|^{p-1} <= C
/// |grad V|_inf E`. The constant `C` is not known, so only finiteness and
/// the sharp algebraic bound implied by `H <= 0` are assessed.
pub fn gradient_bound_monitor(traj: &Trajectory) -> Result<GradientBoundReport> {
    let model = &traj.model;
    let p = model.params.p;
    let b0 = model.params.b0;
    let sup_speed = traj.samples.iter().map(|s| s.state.speed_sq().sqrt()).fold(0.0, f64::max);
    let sup_scaled_speed = b0 * sup_speed.powf(p - 1.0);
    let grad_v_sup = match model.potential {
        crate::potential::Potential::White { kappa } => potential_sup_bounds(kappa).1,
        crate::potential::Potential::Zero => 0.0,
    };
    let (lo, hi) = traj.span();
    let radius = 0f64.clamp(lo, hi);
    let energy = model.derived.omega * segment_energy(traj, f64::NEG_INFINITY, radius, TailMode::ConstantExtension)?.value;
    let h1_bound = if traj.samples.iter().all(|s| s.h <= 0.0) {
        let bmax = traj.samples.iter().map(|s| model.bhat(s.state.pt)).fold(0.0, f64::max);
        Some(b0 * (bmax / (2.0 * model.derived.beta - 1.0)).powf((p - 1.0) / 2.0))
    } else {
        None
    };
    Ok(GradientBoundReport {
        sup_scaled_speed,
        grad_v_sup,
        energy,
        energy_radius: radius,
        grad_v_times_energy: grad_v_sup * energy,
        h1_bound,
        bounded: sup_scaled_speed.is_finite(),
    })
}
