//! Dormand-Prince 5(4) with its fourth-order continuous extension and
//! event location by bisection on the dense output.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::trajectory::{DenseSegment, Event, EventKind, Sample, Trajectory};
use super::{Model, State};
use crate::error::{Error, Result};
use crate::potential::TargetPoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "defaults::rtol")]
    pub rtol: f64,
    #[serde(default = "defaults::atol")]
    pub atol: f64,
    #[serde(default = "defaults::h_max")]
    pub h_max: f64,
    pub t_span: (f64, f64),
    #[serde(default = "defaults::event_tol")]
    pub event_tol: f64,
    #[serde(default = "defaults::max_steps")]
    pub max_steps: usize,
}

mod defaults {
    pub fn rtol() -> f64 {
        1e-10
    }
    pub fn atol() -> f64 {
        1e-12
    }
    pub fn h_max() -> f64 {
        0.5
    }
    pub fn event_tol() -> f64 {
        1e-10
    }
    pub fn max_steps() -> usize {
        5_000_000
    }
}

impl IntegratorConfig {
    pub fn new(t0: f64, t1: f64) -> Self {
        Self {
            rtol: defaults::rtol(),
            atol: defaults::atol(),
            h_max: defaults::h_max(),
            t_span: (t0, t1),
            event_tol: defaults::event_tol(),
            max_steps: defaults::max_steps(),
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_span(mut self, t0: f64, t1: f64) -> Self {
        self.t_span = (t0, t1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.rtol) && ok(self.atol) && ok(self.event_tol) && ok(self.h_max)) {
            return Err(Error::InvalidInput("rtol, atol, event_tol and h_max must be positive".into()));
        }
        if !(self.t_span.0.is_finite() && self.t_span.1.is_finite()) {
            return Err(Error::InvalidInput("t_span must be finite".into()));
        }
        Ok(())
    }
}

/// Events to locate during integration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    /// `y(t) = level`; stops the integration when `terminal`.
    YCrossing { level: f64, terminal: bool },
    /// `theta(t) in reference + 2 pi Z`.
    ThetaResidue { reference: f64 },
    /// Sign change of `V(u(t))`.
    PotentialSign,
    /// Change of `floor((theta + 1/y) / pi)`.
    StripChange,
}

// Dormand-Prince tableau
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

type Vec4 = [f64; 4];

fn axpy(x: &Vec4, h: f64, terms: &[(f64, &Vec4)]) -> Vec4 {
    let mut out = *x;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..4 {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

struct Stepper<'a> {
    model: &'a Model,
    cfg: &'a IntegratorConfig,
    evals: usize,
}

struct StepResult {
    x1: Vec4,
    k: [Vec4; 7],
    err: f64,
}

impl Stepper<'_> {
    fn f(&mut self, t: f64, x: &Vec4) -> Vec4 {
        self.evals += 1;
        self.model.rhs(t, x)
    }

    fn attempt(&mut self, t: f64, x: &Vec4, k1: &Vec4, h: f64) -> StepResult {
        let mut k = [[0.0; 4]; 7];
        k[0] = *k1;
        for s in 1..7 {
            let terms: Vec<(f64, &Vec4)> = (0..s).map(|j| (A[s][j], &k[j])).collect();
            let xs = axpy(x, h, &terms);
            k[s] = self.f(t + C[s] * h, &xs);
        }
        let terms: Vec<(f64, &Vec4)> = (0..6).map(|j| (A[6][j], &k[j])).collect();
        let x1 = axpy(x, h, &terms);
        let mut acc = 0.0;
        for i in 0..4 {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let sc = self.cfg.atol + self.cfg.rtol * x[i].abs().max(x1[i].abs());
            acc += (e / sc).powi(2);
        }
        StepResult { x1, k, err: (acc / 4.0).sqrt() }
    }

    fn initial_step(&mut self, t: f64, x: &Vec4, k1: &Vec4, dir: f64, span: f64) -> f64 {
        let sc: Vec<f64> = x.iter().map(|xi| self.cfg.atol + self.cfg.rtol * xi.abs()).collect();
        let norm = |v: &Vec4| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / 4.0).sqrt();
        let d0 = norm(x);
        let d1 = norm(k1);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.cfg.h_max).min(span);
        let x1 = axpy(x, dir * h0, &[(1.0, k1)]);
        let k2 = self.f(t + dir * h0, &x1);
        let diff: Vec4 = [k2[0] - k1[0], k2[1] - k1[1], k2[2] - k1[2], k2[3] - k1[3]];
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(self.cfg.h_max).min(span)
    }
}

fn dense_coeffs(x0: &Vec4, x1: &Vec4, k: &[Vec4; 7], h: f64) -> [[f64; 4]; 5] {
    let mut c = [[0.0; 4]; 5];
    for i in 0..4 {
        let dy = x1[i] - x0[i];
        let bspl = h * k[0][i] - dy;
        c[0][i] = x0[i];
        c[1][i] = dy;
        c[2][i] = bspl;
        c[3][i] = dy - h * k[6][i] - bspl;
        c[4][i] = h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
    }
    c
}

/// Scalar event function evaluated on a dense state.
fn event_value(spec: &EventSpec, model: &Model, x: &Vec4) -> f64 {
    let pt = TargetPoint::new(x[0], x[1]);
    match *spec {
        EventSpec::YCrossing { level, .. } => x[1] - level,
        EventSpec::ThetaResidue { reference } => (x[0] - reference) / (2.0 * PI),
        EventSpec::PotentialSign => model.v(pt),
        EventSpec::StripChange => pt.phase() / PI,
    }
}

/// Which level sets of the event function lie between `g0` and `g1`.
/// Level-set events (`y`, `V`) use the single level 0; residue events use
/// every integer between the two values.
fn crossed_levels(spec: &EventSpec, g0: f64, g1: f64) -> Vec<f64> {
    match spec {
        EventSpec::YCrossing { .. } | EventSpec::PotentialSign => {
            if (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0) {
                vec![0.0]
            } else {
                vec![]
            }
        }
        EventSpec::ThetaResidue { .. } | EventSpec::StripChange => {
            let (a, b) = (g0.floor(), g1.floor());
            if a == b {
                return vec![];
            }
            if a < b {
                ((a as i64 + 1)..=(b as i64)).map(|j| j as f64).collect()
            } else {
                ((b as i64 + 1)..=(a as i64)).rev().map(|j| j as f64).collect()
            }
        }
    }
}

fn bisect(seg: &DenseSegment, spec: &EventSpec, model: &Model, level: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = |t: f64| event_value(spec, model, &seg.eval(t)) - level;
    let glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 || gm.signum() != glo.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn make_event(spec: &EventSpec, level: f64, g_before: f64, t: f64) -> Event {
    let kind = match *spec {
        EventSpec::YCrossing { level: y, .. } => EventKind::YCrossing { level: y },
        EventSpec::ThetaResidue { reference } => EventKind::ThetaCrossing { reference, level: reference + 2.0 * PI * level },
        EventSpec::PotentialSign => EventKind::PotentialSign { from: g_before.signum(), to: -g_before.signum() },
        EventSpec::StripChange => {
            let from = g_before.floor() as i64;
            let to = if level > g_before { level as i64 } else { level as i64 - 1 };
            EventKind::StripChange { from, to }
        }
    };
    let terminal = matches!(spec, EventSpec::YCrossing { terminal: true, .. });
    Event { t, kind, terminal }
}

const EVENT_SUBDIVISIONS: usize = 4;

/// Events inside one step, sorted along the integration direction.
fn locate_events(seg: &DenseSegment, specs: &[EventSpec], model: &Model, tol: f64) -> Vec<Event> {
    let mut found = Vec::new();
    let n = EVENT_SUBDIVISIONS;
    let ts: Vec<f64> = (0..=n).map(|i| seg.t0 + seg.h * i as f64 / n as f64).collect();
    let xs: Vec<Vec4> = ts.iter().map(|&t| seg.eval(t)).collect();
    for spec in specs {
        for i in 0..n {
            let g0 = event_value(spec, model, &xs[i]);
            let g1 = event_value(spec, model, &xs[i + 1]);
            for level in crossed_levels(spec, g0, g1) {
                let t = bisect(seg, spec, model, level, ts[i], ts[i + 1], tol);
                found.push(make_event(spec, level, g0, t));
            }
        }
    }
    let dir = seg.h.signum();
    found.sort_by(|a, b| (dir * a.t).total_cmp(&(dir * b.t)));
    found
}

/// Integrate the Euler-Lagrange system from `initial` over
/// `config.t_span` (forward or backward).
///
/// Integration failures (step-size underflow, non-finite states, step
/// budget) do not return an error; they truncate the trajectory and are
/// recorded in [`Trajectory::failure`].
pub fn integrate(initial: State, model: &Model, config: &IntegratorConfig, events: &[EventSpec]) -> Result<Trajectory> {
    config.validate()?;
    if !initial.is_finite() {
        return Err(Error::InvalidInput("initial state is not finite".into()));
    }
    let (t0, t_end) = config.t_span;
    if (initial.t - t0).abs() > 1e-12 * (1.0 + t0.abs()) {
        return Err(Error::InvalidInput(format!("initial time {} differs from t_span start {t0}", initial.t)));
    }
    model.try_acceleration(&initial)?;

    let mut start = initial;
    start.t = t0;
    let mut traj = Trajectory::start(*model, start);
    if t_end == t0 {
        return Ok(traj);
    }
    let dir = (t_end - t0).signum();
    let mut stepper = Stepper { model, cfg: config, evals: 0 };
    let mut t = t0;
    let mut x = start.to_vector();
    let mut k1 = stepper.f(t, &x);
    let mut h = stepper.initial_step(t, &x, &k1, dir, (t_end - t0).abs());

    loop {
        if traj.stats.accepted + traj.stats.rejected >= config.max_steps {
            traj.failure = Some(Error::TooManySteps(config.max_steps).to_string());
            break;
        }
        let remaining = (t_end - t).abs();
        if remaining <= 1e-14 * (1.0 + t.abs()) {
            break;
        }
        h = h.min(config.h_max);
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        if step < 1e-13 * (1.0 + t.abs()) {
            traj.failure = Some(Error::StepUnderflow { t, h: step }.to_string());
            break;
        }
        let res = stepper.attempt(t, &x, &k1, dir * step);
        let finite = res.err.is_finite() && res.x1.iter().all(|v| v.is_finite());
        if !finite {
            traj.stats.rejected += 1;
            h = step * FAC_MIN;
            if h < 1e-13 * (1.0 + t.abs()) {
                traj.failure = Some(Error::NonFinite { t }.to_string());
                break;
            }
            continue;
        }
        if res.err > 1.0 {
            traj.stats.rejected += 1;
            h = step * (SAFETY * res.err.powf(-0.2)).max(FAC_MIN);
            continue;
        }

        let t_new = if last { t_end } else { t + dir * step };
        let mut seg = DenseSegment { t0: t, h: t_new - t, t1: t_new, coeffs: dense_coeffs(&x, &res.x1, &res.k, dir * step) };
        let mut x_new = res.x1;
        let mut stop = false;
        for ev in locate_events(&seg, events, model, config.event_tol) {
            let terminal = ev.terminal;
            let te = ev.t;
            traj.events.push(ev);
            if terminal {
                seg.t1 = te;
                x_new = seg.eval(te);
                stop = true;
                break;
            }
        }
        let t_sample = seg.t1;
        traj.segments.push(seg);
        traj.samples.push(Sample::new(model, State::from_vector(t_sample, &x_new)));
        traj.stats.accepted += 1;
        if stop || last {
            break;
        }
        t = t_new;
        x = res.x1;
        k1 = res.k[6];
        let fac = if res.err == 0.0 { FAC_MAX } else { (SAFETY * res.err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX) };
        h = step * fac;
    }
    traj.stats.evaluations = stepper.evals;
    Ok(traj)
}
