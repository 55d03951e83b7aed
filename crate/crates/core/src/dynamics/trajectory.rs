use serde::{Deserialize, Serialize};
use std::io::Write;

use super::{Model, State};
use crate::error::{Error, Result};
use crate::quadrature::{gauss7_composite, MAX_PANEL};

/// Dopri5 continuous extension of one accepted step, valid on `[t0, t1]`
/// (`t1` may stop short of `t0 + h` when a terminal event cut the step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    pub t1: f64,
    pub(crate) coeffs: [[f64; 4]; 5],
}

impl DenseSegment {
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        out
    }

    pub fn state(&self, t: f64) -> State {
        State::from_vector(t, &self.eval(t))
    }

    fn lo(&self) -> f64 {
        self.t0.min(self.t1)
    }

    fn hi(&self) -> f64 {
        self.t0.max(self.t1)
    }
}

/// A sample at a step boundary with the diagnostics `l`, `H` and `V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: State,
    pub ell: f64,
    pub h: f64,
    pub v: f64,
}

impl Sample {
    pub fn new(model: &Model, state: State) -> Self {
        Self { state, ell: model.ell(&state), h: model.hamiltonian(&state), v: model.v(state.pt) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    YCrossing { level: f64 },
    ThetaCrossing { reference: f64, level: f64 },
    PotentialSign { from: f64, to: f64 },
    StripChange { from: i64, to: i64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::YCrossing { .. } => "y_crossing",
            EventKind::ThetaCrossing { .. } => "theta_crossing",
            EventKind::PotentialSign { .. } => "potential_sign",
            EventKind::StripChange { .. } => "strip_change",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: Model,
    pub samples: Vec<Sample>,
    pub segments: Vec<DenseSegment>,
    pub events: Vec<Event>,
    pub stats: StepStats,
    /// Set when integration stopped early (step underflow, non-finite
    /// state); the samples up to that point are kept.
    pub failure: Option<String>,
}

impl Trajectory {
    pub(crate) fn start(model: Model, initial: State) -> Self {
        Self {
            model,
            samples: vec![Sample::new(&model, initial)],
            segments: Vec::new(),
            events: Vec::new(),
            stats: StepStats::default(),
            failure: None,
        }
    }

    /// A trajectory sitting at `state` (which must be an equilibrium) on
    /// `[t0, t1]`.
    pub fn constant(model: Model, state: State, t1: f64) -> Self {
        let mut traj = Self::start(model, state);
        let x = state.to_vector();
        let mut end = state;
        end.t = t1;
        traj.segments.push(DenseSegment { t0: state.t, h: t1 - state.t, t1, coeffs: [x, [0.0; 4], [0.0; 4], [0.0; 4], [0.0; 4]] });
        traj.samples.push(Sample::new(&model, end));
        traj
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn is_forward(&self) -> bool {
        self.last().state.t >= self.first().state.t
    }

    /// `(min t, max t)` covered.
    pub fn span(&self) -> (f64, f64) {
        let (a, b) = (self.first().state.t, self.last().state.t);
        (a.min(b), a.max(b))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    fn segment_index(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let fwd = self.is_forward();
        // segments are ordered along the direction of integration
        let idx = self.segments.partition_point(|seg| if fwd { seg.hi() < t } else { seg.lo() > t });
        if idx < self.segments.len() {
            Some(idx)
        } else {
            Some(self.segments.len() - 1)
        }
    }

    /// Dense-output state at `t`, `None` outside the span.
    pub fn state_at(&self, t: f64) -> Option<State> {
        let (lo, hi) = self.span();
        if t < lo || t > hi {
            return None;
        }
        match self.segment_index(t) {
            Some(i) => Some(self.segments[i].state(t)),
            None => Some(State { t, ..self.first().state }),
        }
    }

    /// `int_a^b f(u(t), u'(t), t) dt` on the dense output with a 7-point
    /// Gauss rule on every step (pieces of steps at the ends).
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(&State) -> f64) -> Result<f64> {
        let (lo, hi) = self.span();
        let (x, y) = (a.min(b), a.max(b));
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if x < lo - slack || y > hi + slack {
            return Err(Error::OutOfSpan { a, b, lo, hi });
        }
        let mut acc = 0.0;
        for seg in &self.segments {
            let s = seg.lo().max(x);
            let e = seg.hi().min(y);
            if e > s {
                acc += gauss7_composite(s, e, MAX_PANEL, |t| f(&seg.state(t)));
            }
        }
        Ok(if a <= b { acc } else { -acc })
    }

    /// `max_i |H(t_i) - H(t_0) - int_{t_0}^{t_i} dH/dt|`, the integral taken
    /// by quadrature of the exact dissipation rate on the dense output.
    pub fn hamiltonian_residual(&self) -> f64 {
        let h0 = self.first().h;
        let mut integral = 0.0;
        let mut worst: f64 = 0.0;
        for (seg, sample) in self.segments.iter().zip(self.samples.iter().skip(1)) {
            integral += gauss7_composite(seg.t0, seg.t1, MAX_PANEL, |t| self.model.hamiltonian_rate(&seg.state(t)));
            worst = worst.max((sample.h - h0 - integral).abs());
        }
        worst
    }

    /// Whether `H` never increases by more than `tol (1 + |H|)` between
    /// consecutive samples, read in the direction of increasing `t`.
    pub fn hamiltonian_monotone(&self, tol: f64) -> bool {
        self.max_hamiltonian_increase(tol) <= 0.0
    }

    /// Largest excess `H(t_{i+1}) - H(t_i) - tol (1 + |H(t_i)|)` over pairs
    /// ordered by increasing `t`.
    pub fn max_hamiltonian_increase(&self, tol: f64) -> f64 {
        let fwd = self.is_forward();
        self.samples
            .windows(2)
            .map(|w| {
                let (early, late) = if fwd { (&w[0], &w[1]) } else { (&w[1], &w[0]) };
                late.h - early.h - tol * (1.0 + early.h.abs())
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Concatenate a trajectory that starts where `self` ends.
    pub fn append(&mut self, other: Trajectory) {
        let mut samples = other.samples.into_iter();
        samples.next();
        self.samples.extend(samples);
        self.segments.extend(other.segments);
        self.events.extend(other.events);
        self.stats.accepted += other.stats.accepted;
        self.stats.rejected += other.stats.rejected;
        self.stats.evaluations += other.stats.evaluations;
        if self.failure.is_none() {
            self.failure = other.failure;
        }
    }

    pub fn first_event(&self, pred: impl Fn(&EventKind) -> bool) -> Option<&Event> {
        self.events.iter().find(|e| pred(&e.kind))
    }

    /// CSV with header `t,theta,y,dtheta,dy,ell,H,V`, 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,theta,y,dtheta,dy,ell,H,V")?;
        for s in &self.samples {
            let st = &s.state;
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                st.t, st.pt.theta, st.pt.y, st.vel[0], st.vel[1], s.ell, s.h, s.v
            )?;
        }
        Ok(())
    }

    /// Event log as a JSON array of `{t, kind, payload}` objects.
    pub fn events_json(&self) -> serde_json::Value {
        let items = self
            .events
            .iter()
            .map(|e| {
                let mut payload = serde_json::to_value(&e.kind).expect("event kinds serialize");
                if let Some(obj) = payload.as_object_mut() {
                    obj.remove("kind");
                    obj.insert("terminal".into(), e.terminal.into());
                }
                serde_json::json!({ "t": e.t, "kind": e.kind.name(), "payload": payload })
            })
            .collect();
        serde_json::Value::Array(items)
    }
}
