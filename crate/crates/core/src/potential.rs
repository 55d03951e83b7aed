//! White's potential `V(theta, y) = -exp(-kappa/y^2) sin(theta + 1/y)`, its
//! gradient, the conformal factor `Bhat = (m-1)(B0 - V)` and the geometry of
//! the zero set `{V = 0}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::params::ModelParams;

/// A point of the `(T^1 x R)` factor with a lifted (unreduced) angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub theta: f64,
    pub y: f64,
}

impl TargetPoint {
    pub const fn new(theta: f64, y: f64) -> Self {
        Self { theta, y }
    }

    /// Phase `theta + 1/y` whose residue mod `pi` delimits the strips.
    pub fn phase(&self) -> f64 {
        self.theta + self.y.recip()
    }

    /// Angle reduced to `[0, 2 pi)`.
    pub fn reduced_theta(&self) -> f64 {
        self.theta.rem_euclid(2.0 * PI)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.theta, self.y]
    }
}

/// Below `|y| = FLAT_FACTOR sqrt(kappa)` the factor `exp(-kappa/y^2)` is
/// below the smallest subnormal and `V` is returned as exactly zero.
pub const FLAT_FACTOR: f64 = 1e-3;

#[inline]
fn is_flat(y: f64, kappa: f64) -> bool {
    y.abs() < FLAT_FACTOR * kappa.sqrt()
}

pub fn potential_v(pt: TargetPoint, kappa: f64) -> f64 {
    if is_flat(pt.y, kappa) {
        return 0.0;
    }
    -(-kappa / (pt.y * pt.y)).exp() * pt.phase().sin()
}

/// `(dV/dtheta, dV/dy)`.
pub fn grad_v(pt: TargetPoint, kappa: f64) -> [f64; 2] {
    if is_flat(pt.y, kappa) {
        return [0.0, 0.0];
    }
    let y = pt.y;
    let inv2 = 1.0 / (y * y);
    let damp = (-kappa * inv2).exp();
    let (s, c) = pt.phase().sin_cos();
    [-damp * c, damp * (inv2 * c - 2.0 * kappa * inv2 / y * s)]
}

/// Conformal factor `(m-1)(B0 - V)` for White's potential at `params.kappa`.
pub fn bhat(pt: TargetPoint, params: &ModelParams) -> f64 {
    f64::from(params.m - 1) * (params.b0 - potential_v(pt, params.kappa))
}

/// Potential used by the dynamics. `Zero` switches the potential off so
/// that the motion is the damped free flight `u'' = -alpha u'` (for
/// `beta = 1`), which has closed-form solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    White { kappa: f64 },
    Zero,
}

impl Potential {
    pub fn value(&self, pt: TargetPoint) -> f64 {
        match *self {
            Potential::White { kappa } => potential_v(pt, kappa),
            Potential::Zero => 0.0,
        }
    }

    pub fn gradient(&self, pt: TargetPoint) -> [f64; 2] {
        match *self {
            Potential::White { kappa } => grad_v(pt, kappa),
            Potential::Zero => [0.0, 0.0],
        }
    }
}

/// Upper bounds for `sup|V|` and `sup|grad V|` over the whole plane.
///
/// For fixed `y` the squared gradient is a quadratic form in
/// `(cos phi, sin phi)`, so its maximum over `theta` is the top eigenvalue
/// of a 2x2 matrix. The remaining one-dimensional maximisation over `y` is
/// done on a logarithmic grid with golden-section refinement around the
/// best cells, and a relative margin of `1e-6` is added.
pub fn potential_sup_bounds(kappa: f64) -> (f64, f64) {
    let profile = |y: f64| -> f64 {
        if is_flat(y, kappa) {
            return 0.0;
        }
        let a = 1.0 / (y * y);
        let b = 2.0 * kappa / (y * y * y);
        let tr = 1.0 + a * a + b * b;
        let lambda = 0.5 * (tr + (tr * tr - 4.0 * b * b).max(0.0).sqrt());
        (-kappa * a).exp() * lambda.sqrt()
    };

    let lo = (FLAT_FACTOR * kappa.sqrt()).ln();
    let hi = 1e4f64.ln();
    let n = 4000;
    let grid: Vec<f64> = (0..=n).map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp()).collect();
    let vals: Vec<f64> = grid.iter().map(|&y| profile(y)).collect();

    // the limit y -> infinity, where |grad V| -> 1
    let mut best = 1.0f64;
    for i in 1..n {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
            best = best.max(golden_max(&profile, grid[i - 1], grid[i + 1]));
        }
    }
    best = best.max(vals.iter().cloned().fold(0.0, f64::max));
    (1.0, best * (1.0 + 1e-6))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
        if (b - a).abs() <= 1e-14 * b.abs() {
            break;
        }
    }
    f1.max(f2)
}

/// Position relative to `{V = 0} = T^1 x {0}  u  {theta + 1/y in pi Z}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroSetClass {
    Axis,
    Wall { k: i64 },
    /// Inside the strip `k pi < theta + 1/y < (k+1) pi`.
    Interior { strip: i64 },
}

/// Distance from the phase `theta + 1/y` to the nearest wall `pi Z`.
pub fn wall_distance(pt: TargetPoint) -> f64 {
    let phi = pt.phase();
    (phi - PI * (phi / PI).round()).abs()
}

pub fn strip_index(pt: TargetPoint) -> i64 {
    (pt.phase() / PI).floor() as i64
}

pub fn zero_set_classify(pt: TargetPoint, tol: f64) -> ZeroSetClass {
    if pt.y.abs() <= tol {
        ZeroSetClass::Axis
    } else if wall_distance(pt) <= tol {
        ZeroSetClass::Wall { k: (pt.phase() / PI).round() as i64 }
    } else {
        ZeroSetClass::Interior { strip: strip_index(pt) }
    }
}
