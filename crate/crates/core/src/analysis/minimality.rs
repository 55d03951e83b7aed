use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{State, Trajectory};
use crate::error::{Error, Result};
use crate::potential::TargetPoint;

/// Sine modes per component.
pub const MODES: usize = 8;
/// Bound on `sup |eta|` for each component.
pub const MAX_AMPLITUDE: f64 = 0.1;

/// Energies are weighted by `e^{alpha (t - b)}` so that late windows do
/// not overflow; every reported energy carries that factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub a: f64,
    pub b: f64,
    pub rng_seed: u64,
    pub n_perturbations: usize,
    /// `int_a^b l^beta e^{alpha (t - b)} dt` along the trajectory.
    pub energy: f64,
    /// `E(u + 0) - E(u)`, computed the same way as the others.
    pub zero_difference: f64,
    pub differences: Vec<f64>,
    pub min_difference: f64,
    /// `min_difference / energy`.
    pub min_relative: f64,
}

/// `eta(t) = sum_k c_k sin(k pi (t - a) / (b - a))` per component.
#[derive(Clone, Debug, PartialEq)]
struct Perturbation {
    coeffs: [[f64; MODES]; 2],
}

impl Perturbation {
    fn zero() -> Self {
        Self { coeffs: [[0.0; MODES]; 2] }
    }

    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut coeffs = [[0.0; MODES]; 2];
        for comp in &mut coeffs {
            let amp = rng.gen_range(0.0..=MAX_AMPLITUDE);
            for c in comp.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let l1: f64 = comp.iter().map(|c: &f64| c.abs()).sum();
            if l1 > 0.0 {
                comp.iter_mut().for_each(|c| *c *= amp / l1);
            }
        }
        Self { coeffs }
    }

    /// Adds `(eta, eta')` to the state.
    fn apply(&self, s: &State, a: f64, b: f64) -> State {
        let w = PI / (b - a);
        let x = s.t - a;
        let mut out = *s;
        for (i, comp) in self.coeffs.iter().enumerate() {
            let (mut d, mut dd) = (0.0, 0.0);
            for (k, c) in comp.iter().enumerate() {
                let f = w * (k + 1) as f64;
                d += c * (f * x).sin();
                dd += c * f * (f * x).cos();
            }
            if i == 0 {
                out.pt = TargetPoint::new(out.pt.theta + d, out.pt.y);
            } else {
                out.pt = TargetPoint::new(out.pt.theta, out.pt.y + d);
            }
            out.vel[i] += dd;
        }
        out
    }
}

/// Compares the energy of the trajectory on `[a, b]` with that of
/// `n_perturbations` random perturbations fixed at both ends. The same
/// quadrature nodes are used for every path.
pub fn minimality_probe(traj: &Trajectory, a: f64, b: f64, n_perturbations: usize, rng_seed: u64) -> Result<MinimalityReport> {
    if !(a < b) {
        return Err(Error::InvalidInput(format!("need a < b, got [{a}, {b}]")));
    }
    if n_perturbations == 0 {
        return Err(Error::InvalidInput("need at least one perturbation".into()));
    }
    let model = &traj.model;
    let (alpha, beta) = (model.derived.alpha, model.derived.beta);
    let energy_of = |eta: &Perturbation| {
        traj.integrate(a, b, |s| {
            let q = eta.apply(s, a, b);
            model.ell(&q).powf(beta) * (alpha * (s.t - b)).exp()
        })
    };
    let base = traj.integrate(a, b, |s| model.ell(s).powf(beta) * (alpha * (s.t - b)).exp())?;
    let zero_difference = energy_of(&Perturbation::zero())? - base;

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut differences = Vec::with_capacity(n_perturbations);
    for _ in 0..n_perturbations {
        let eta = Perturbation::random(&mut rng);
        differences.push(energy_of(&eta)? - base);
    }
    let min_difference = differences.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MinimalityReport {
        a,
        b,
        rng_seed,
        n_perturbations,
        energy: base,
        zero_difference,
        differences,
        min_difference,
        min_relative: min_difference / base,
    })
}
