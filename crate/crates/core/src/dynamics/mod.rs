//! Reduced Euler-Lagrange dynamics in log-radius time `t = ln r`.
//!
//! The Lagrangian is `l(u)^beta e^{alpha t}` with `l = |u'|^2 + Bhat(u)` and
//! `Bhat = (m-1)(B0 - V)`. Its conservative Euler-Lagrange equation
//! `d/dt(2 e^{alpha t} l^{beta-1} u') = e^{alpha t} l^{beta-1} grad Bhat`
//! expands to
//!
//! ```text
//! [I + 2(beta-1) l^{-1} u'u'^T] u'' = grad Bhat / 2 - alpha u' - (beta-1) l^{-1} (grad Bhat . u') u'
//! ```
//!
//! and dissipates `H = l^{beta-1}((2 beta - 1)|u'|^2 - Bhat)` at the exact
//! rate `dH/dt = -2 beta alpha l^{beta-1} |u'|^2`.

mod integrator;
mod trajectory;

pub use integrator::{integrate, EventSpec, IntegratorConfig};
pub use trajectory::{DenseSegment, Event, EventKind, Sample, StepStats, Trajectory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derive, Derived, ModelParams};
use crate::potential::{Potential, TargetPoint};

/// Position, velocity and log-radius time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub pt: TargetPoint,
    pub vel: [f64; 2],
    pub t: f64,
}

impl State {
    pub fn at_rest(pt: TargetPoint, t: f64) -> Self {
        Self { pt, vel: [0.0, 0.0], t }
    }

    pub fn speed_sq(&self) -> f64 {
        self.vel[0] * self.vel[0] + self.vel[1] * self.vel[1]
    }

    pub fn is_finite(&self) -> bool {
        self.pt.theta.is_finite() && self.pt.y.is_finite() && self.vel.iter().all(|v| v.is_finite()) && self.t.is_finite()
    }

    pub(crate) fn to_vector(self) -> [f64; 4] {
        [self.pt.theta, self.pt.y, self.vel[0], self.vel[1]]
    }

    pub(crate) fn from_vector(t: f64, x: &[f64; 4]) -> Self {
        Self { pt: TargetPoint::new(x[0], x[1]), vel: [x[2], x[3]], t }
    }
}

/// Parameters together with their derived constants and the potential in
/// use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: ModelParams,
    pub derived: Derived,
    pub potential: Potential,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let derived = derive(&params)?;
        Ok(Self { params, derived, potential: Potential::White { kappa: params.kappa } })
    }

    /// Same parameters with `V` switched off.
    pub fn zero_potential(params: ModelParams) -> Result<Self> {
        let mut model = Self::new(params)?;
        model.potential = Potential::Zero;
        Ok(model)
    }

    fn dim_factor(&self) -> f64 {
        f64::from(self.params.m - 1)
    }

    pub fn v(&self, pt: TargetPoint) -> f64 {
        self.potential.value(pt)
    }

    pub fn bhat(&self, pt: TargetPoint) -> f64 {
        self.dim_factor() * (self.params.b0 - self.v(pt))
    }

    pub fn grad_bhat(&self, pt: TargetPoint) -> [f64; 2] {
        let g = self.potential.gradient(pt);
        let f = -self.dim_factor();
        [f * g[0], f * g[1]]
    }

    pub fn ell(&self, s: &State) -> f64 {
        s.speed_sq() + self.bhat(s.pt)
    }

    pub fn hamiltonian(&self, s: &State) -> f64 {
        let beta = self.derived.beta;
        let ell = self.ell(s);
        ell.powf(beta - 1.0) * ((2.0 * beta - 1.0) * s.speed_sq() - self.bhat(s.pt))
    }

    pub fn hamiltonian_rate(&self, s: &State) -> f64 {
        let Derived { alpha, beta, .. } = self.derived;
        -2.0 * beta * alpha * self.ell(s).powf(beta - 1.0) * s.speed_sq()
    }

    /// `u''` from the expanded Euler-Lagrange equation, inverting the
    /// rank-one perturbed identity in closed form.
    pub fn acceleration(&self, s: &State) -> [f64; 2] {
        let Derived { alpha, beta, .. } = self.derived;
        let g = self.grad_bhat(s.pt);
        let v = s.vel;
        let v2 = s.speed_sq();
        let ell = v2 + self.bhat(s.pt);
        let gv = g[0] * v[0] + g[1] * v[1];
        let k = (beta - 1.0) / ell * gv;
        let rhs = [0.5 * g[0] - alpha * v[0] - k * v[0], 0.5 * g[1] - alpha * v[1] - k * v[1]];
        let c = 2.0 * (beta - 1.0) / ell;
        let proj = c / (1.0 + c * v2) * (v[0] * rhs[0] + v[1] * rhs[1]);
        [rhs[0] - proj * v[0], rhs[1] - proj * v[1]]
    }

    /// Checked variant of [`Model::acceleration`].
    pub fn try_acceleration(&self, s: &State) -> Result<[f64; 2]> {
        if !(self.derived.beta > 0.5) {
            return Err(Error::InvalidParams(format!(
                "beta = {} must exceed 1/2 for the Euler-Lagrange matrix to be invertible",
                self.derived.beta
            )));
        }
        Ok(self.acceleration(s))
    }

    /// The Euler-Lagrange matrix `I + 2(beta-1) l^{-1} u'u'^T` applied to `w`.
    pub fn el_matrix_apply(&self, s: &State, w: [f64; 2]) -> [f64; 2] {
        let c = 2.0 * (self.derived.beta - 1.0) / self.ell(s);
        let vw = s.vel[0] * w[0] + s.vel[1] * w[1];
        [w[0] + c * vw * s.vel[0], w[1] + c * vw * s.vel[1]]
    }

    pub(crate) fn rhs(&self, t: f64, x: &[f64; 4]) -> [f64; 4] {
        let a = self.acceleration(&State::from_vector(t, x));
        [x[2], x[3], a[0], a[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn demo() -> Model {
        Model::new(ModelParams::demo()).unwrap()
    }

    fn seed1() -> State {
        State::at_rest(TargetPoint::new(PI / 2.0, 1.0 / (2.0 * PI)), 0.0)
    }

    #[test]
    fn ell_examples() {
        let m = demo();
        let axis = State::at_rest(TargetPoint::new(0.3, 0.0), 0.0);
        assert_eq!(m.ell(&axis), 60.0);
        let moving = State { vel: [1.0, 0.0], ..axis };
        assert_eq!(m.ell(&moving), 61.0);
        let m2 = Model::new(ModelParams::demo().with_kappa(0.02)).unwrap();
        assert!((m2.ell(&seed1()) - 62.724).abs() < 1e-3);
    }

    #[test]
    fn hamiltonian_examples() {
        let m = demo();
        let axis = State::at_rest(TargetPoint::new(0.3, 0.0), 0.0);
        assert_eq!(m.hamiltonian(&axis), m.derived.h_crit);
        assert_eq!(m.hamiltonian(&axis), -60.0);
        assert_eq!(m.hamiltonian(&State { vel: [0.0, 1.0], ..axis }), -59.0);
        let m2 = Model::new(ModelParams::demo().with_kappa(0.02)).unwrap();
        let h = m2.hamiltonian(&seed1());
        assert!((h + 62.724).abs() < 1e-3 && h < m2.derived.h_crit);
    }

    #[test]
    fn rate_examples() {
        let m = demo();
        let axis = State::at_rest(TargetPoint::new(0.3, 0.0), 0.0);
        assert_eq!(m.hamiltonian_rate(&axis), 0.0);
        assert_eq!(m.hamiltonian_rate(&State { vel: [1.0, 0.0], ..axis }), -10.0);
    }

    #[test]
    fn acceleration_examples() {
        let m = Model::new(ModelParams::demo().with_kappa(0.02)).unwrap();
        let a = m.acceleration(&seed1());
        let expect = 6.0 * 0.02 * (2.0 * PI).powi(3) * (-0.02 * 4.0 * PI * PI).exp();
        assert!(a[0].abs() < 1e-12);
        assert!((a[1] - expect).abs() < 1e-12);
        assert!((a[1] - 13.52).abs() < 1e-2);

        let z = Model::zero_potential(ModelParams::demo()).unwrap();
        let s = State { pt: TargetPoint::new(1.0, 2.0), vel: [0.7, -0.3], t: 0.0 };
        assert_eq!(z.acceleration(&s), [-5.0 * 0.7, -5.0 * -0.3]);
    }

    #[test]
    fn rejects_small_beta() {
        let mut m = demo();
        m.derived.beta = 0.5;
        assert!(m.try_acceleration(&seed1()).is_err());
    }

    /// `dH/dt` along the vector field by the chain rule, with `dH/du` and
    /// `dH/du'` from central differences.
    fn chain_rule_rate(m: &Model, s: &State) -> f64 {
        let a = m.acceleration(s);
        let x = s.to_vector();
        let dx = [x[2], x[3], a[0], a[1]];
        let h = 1e-6;
        (0..4)
            .map(|i| {
                let mut p = x;
                let mut q = x;
                p[i] += h;
                q[i] -= h;
                let hp = m.hamiltonian(&State::from_vector(0.0, &p));
                let hq = m.hamiltonian(&State::from_vector(0.0, &q));
                (hp - hq) / (2.0 * h) * dx[i]
            })
            .sum()
    }

    proptest! {
        #[test]
        fn hamiltonian_rate_matches_chain_rule(
            theta in -3.0f64..3.0, y in 0.3f64..3.0, vt in -3.0f64..3.0, vy in -3.0f64..3.0,
            p in prop::sample::select(vec![1.5, 2.0, 3.0, 4.5]),
        ) {
            let m = Model::new(ModelParams::new(9, p, 10.0, 1.0)).unwrap();
            let s = State { pt: TargetPoint::new(theta, y), vel: [vt, vy], t: 0.0 };
            let exact = m.hamiltonian_rate(&s);
            let fd = chain_rule_rate(&m, &s);
            prop_assert!((exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()), "exact {} fd {}", exact, fd);
        }

        #[test]
        fn velocity_bound_when_h_nonpositive(theta in -3.0f64..3.0, y in -3.0f64..3.0, vt in -20.0f64..20.0, vy in -20.0f64..20.0, p in 1.2f64..5.0) {
            let m = Model::new(ModelParams::new(9, p, 10.0, 1.0)).unwrap();
            let s = State { pt: TargetPoint::new(theta, y), vel: [vt, vy], t: 0.0 };
            if m.hamiltonian(&s) <= 0.0 {
                prop_assert!((2.0 * m.derived.beta - 1.0) * s.speed_sq() <= m.bhat(s.pt) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn hamiltonian_nondecreasing_in_speed(theta in -3.0f64..3.0, y in -3.0f64..3.0, dir in 0.0f64..6.3, s1 in 0.0f64..10.0, ds in 0.0f64..10.0, p in 1.2f64..5.0) {
            let m = Model::new(ModelParams::new(9, p, 10.0, 1.0)).unwrap();
            let at = |speed: f64| State { pt: TargetPoint::new(theta, y), vel: [speed * dir.cos(), speed * dir.sin()], t: 0.0 };
            let (h1, h2) = (m.hamiltonian(&at(s1)), m.hamiltonian(&at(s1 + ds)));
            prop_assert!(h2 >= h1 - 1e-12 * h1.abs());
            prop_assert!(h1 >= m.hamiltonian(&at(0.0)) - 1e-12 * h1.abs());
        }

        #[test]
        fn el_matrix_bounds(theta in -3.0f64..3.0, y in -3.0f64..3.0, vt in -20.0f64..20.0, vy in -20.0f64..20.0, w0 in -5.0f64..5.0, w1 in -5.0f64..5.0, p in 1.1f64..6.0) {
            let m = Model::new(ModelParams::new(9, p, 10.0, 1.0)).unwrap();
            let s = State { pt: TargetPoint::new(theta, y), vel: [vt, vy], t: 0.0 };
            let mw = m.el_matrix_apply(&s, [w0, w1]);
            let q = w0 * mw[0] + w1 * mw[1];
            let n2 = w0 * w0 + w1 * w1;
            let k = 2.0 * m.derived.beta - 1.0;
            prop_assert!(q >= k.min(1.0) * n2 * (1.0 - 1e-12) - 1e-12);
            prop_assert!(q <= k.max(1.0) * n2 * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn acceleration_solves_el_system(theta in -3.0f64..3.0, y in 0.2f64..3.0, vt in -5.0f64..5.0, vy in -5.0f64..5.0, p in 1.1f64..6.0) {
            let m = Model::new(ModelParams::new(9, p, 10.0, 1.0)).unwrap();
            let s = State { pt: TargetPoint::new(theta, y), vel: [vt, vy], t: 0.0 };
            let a = m.acceleration(&s);
            let lhs = m.el_matrix_apply(&s, a);
            let g = m.grad_bhat(s.pt);
            let beta = m.derived.beta;
            let ell = m.ell(&s);
            let gv = g[0] * vt + g[1] * vy;
            for (i, vi) in [vt, vy].into_iter().enumerate() {
                let rhs = 0.5 * g[i] - m.derived.alpha * vi - (beta - 1.0) / ell * gv * vi;
                prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }
}
