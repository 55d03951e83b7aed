//! Natural boundary value problem on `[t_k, 0]`: `u(0) = u0`, `u'(t_k) = 0`.
//!
//! Integrating backward from `t = 0` amplifies errors by `e^{alpha |t_k|}`,
//! and forward runs grow just as fast across valleys of `Bhat`. The unknowns
//! are therefore the states at the nodes of a grid on `[t_k, 0]`, every
//! shot runs forward over at most `max_shot`, and Newton's method with a
//! finite-difference Jacobian and damped updates removes the defects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegratorConfig, Model, State, Trajectory};
use crate::error::{Error, Result};
use crate::potential::TargetPoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    /// Integrator settings for every shot; the span is set per shot.
    pub integrator: IntegratorConfig,
    /// Longest shooting interval.
    pub max_shot: f64,
    pub max_iterations: usize,
    /// Converged when the residual is below `tol (1 + |u'(0)|)`.
    pub tol: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::new(0.0, 1.0).with_tolerances(1e-12, 1e-14),
            max_shot: 0.5,
            max_iterations: 40,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub u0: TargetPoint,
    pub t_k: f64,
    /// `u'(0)` of the solution.
    pub initial_velocity: [f64; 2],
    /// Largest of `|u'(t_k)|`, `|u(0) - u0|` and the mismatches between
    /// consecutive shots (componentwise).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Shots from every node concatenated. A single run from `t_k` is not
    /// used because motion across a valley of `Bhat` is unstable forward.
    pub trajectory: Trajectory,
}

struct Problem<'a> {
    model: &'a Model,
    cfg: &'a ShootingConfig,
    nodes: Vec<f64>,
    u0: TargetPoint,
}

impl Problem<'_> {
    fn shots(&self) -> usize {
        self.nodes.len() - 1
    }

    fn shoot(&self, i: usize, x: &[f64]) -> Result<[f64; 4]> {
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let s = State { pt: TargetPoint::new(x[0], x[1]), vel: [x[2], x[3]], t: t0 };
        let traj = integrate(s, self.model, &self.cfg.integrator.with_span(t0, t1), &[])?;
        if let Some(f) = traj.failure {
            return Err(Error::InvalidInput(format!("shot {i} failed: {f}")));
        }
        let e = traj.last().state;
        Ok([e.pt.theta, e.pt.y, e.vel[0], e.vel[1]])
    }

    fn defects(&self, z: &DVector<f64>, ends: &[[f64; 4]]) -> DVector<f64> {
        let n = self.shots();
        let mut f = DVector::zeros(4 * n);
        f[0] = z[2];
        f[1] = z[3];
        for i in 1..n {
            for c in 0..4 {
                f[2 + 4 * (i - 1) + c] = z[4 * i + c] - ends[i - 1][c];
            }
        }
        let last = ends[n - 1];
        f[4 * n - 2] = last[0] - self.u0.theta;
        f[4 * n - 1] = last[1] - self.u0.y;
        f
    }

    fn all_shots(&self, z: &DVector<f64>) -> Result<Vec<[f64; 4]>> {
        (0..self.shots()).map(|i| self.shoot(i, &z.as_slice()[4 * i..4 * i + 4])).collect()
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.shots();
        let mut jac = DMatrix::zeros(4 * n, 4 * n);
        jac[(0, 2)] = 1.0;
        jac[(1, 3)] = 1.0;
        for i in 1..n {
            for c in 0..4 {
                jac[(2 + 4 * (i - 1) + c, 4 * i + c)] = 1.0;
            }
        }
        for i in 0..n {
            let x: Vec<f64> = z.as_slice()[4 * i..4 * i + 4].to_vec();
            for c in 0..4 {
                let h = 1e-7 * (1.0 + x[c].abs());
                let mut xp = x.clone();
                xp[c] += h;
                let mut xm = x.clone();
                xm[c] -= h;
                let (ep, em) = (self.shoot(i, &xp)?, self.shoot(i, &xm)?);
                let col: Vec<f64> = (0..4).map(|r| (ep[r] - em[r]) / (2.0 * h)).collect();
                if i + 1 < n {
                    for r in 0..4 {
                        jac[(2 + 4 * i + r, 4 * i + c)] = -col[r];
                    }
                } else {
                    jac[(4 * n - 2, 4 * i + c)] = col[0];
                    jac[(4 * n - 1, 4 * i + c)] = col[1];
                }
            }
        }
        Ok(jac)
    }
}

/// Damped Newton on the shooting defects from the guess `z`. Returns the
/// final iterate, its defect norm and the iterations used.
fn newton(problem: &Problem, mut z: DVector<f64>, max_iterations: usize, tol: f64) -> Result<(DVector<f64>, f64, usize)> {
    let mut ends = problem.all_shots(&z)?;
    let mut f = problem.defects(&z, &ends);
    let mut norm = f.amax();
    let mut iterations = 0;
    let scale = |ends: &[[f64; 4]]| {
        let e = ends[ends.len() - 1];
        1.0 + e[2].hypot(e[3])
    };
    while norm > tol * scale(&ends) && iterations < max_iterations {
        iterations += 1;
        let jac = problem.jacobian(&z)?;
        let Some(step) = jac.lu().solve(&(-&f)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 1024.0 {
            let trial = &z + &step * lambda;
            if let Ok(e) = problem.all_shots(&trial) {
                let ft = problem.defects(&trial, &e);
                let nt = ft.amax();
                if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * norm {
                    z = trial;
                    ends = e;
                    f = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((z, norm, iterations))
}

/// Shooting nodes: `0, -L, -2L, ...` down to `t_k`, ascending.
fn grid(t_k: f64, max_shot: f64) -> Vec<f64> {
    let full = ((-t_k) / max_shot * (1.0 - 1e-12)).floor() as usize;
    let mut nodes = vec![t_k];
    nodes.extend((0..=full).rev().map(|i| -(i as f64) * max_shot).filter(|t| *t > t_k));
    nodes
}

fn rest_guess(u0: TargetPoint, shots: usize) -> DVector<f64> {
    let mut z = DVector::zeros(4 * shots);
    for i in 0..shots {
        z[4 * i] = u0.theta;
        z[4 * i + 1] = u0.y;
    }
    z
}

/// Node states read off a solution on a shorter window; nodes before its
/// start take its starting rest state.
fn guess_from(prev: &Trajectory, nodes: &[f64]) -> DVector<f64> {
    let lo = prev.span().0;
    let rest = State::at_rest(prev.first().state.pt, lo);
    let mut z = DVector::zeros(4 * (nodes.len() - 1));
    for (i, &t) in nodes[..nodes.len() - 1].iter().enumerate() {
        let s = if t >= lo { prev.state_at(t).unwrap_or(rest) } else { rest };
        z.rows_mut(4 * i, 4).copy_from_slice(&[s.pt.theta, s.pt.y, s.vel[0], s.vel[1]]);
    }
    z
}

/// The piecewise solution: every shot integrated from its node and the
/// pieces concatenated (jumps at the nodes are bounded by the defect).
fn shots_run(z: &DVector<f64>, nodes: &[f64], model: &Model, cfg: &ShootingConfig) -> Result<Trajectory> {
    let mut out: Option<Trajectory> = None;
    for i in 0..nodes.len() - 1 {
        let x = &z.as_slice()[4 * i..4 * i + 4];
        let s = State { pt: TargetPoint::new(x[0], x[1]), vel: [x[2], x[3]], t: nodes[i] };
        let piece = integrate(s, model, &cfg.integrator.with_span(nodes[i], nodes[i + 1]), &[])?;
        if let Some(fail) = &piece.failure {
            return Err(Error::InvalidInput(format!("shot from t = {} failed: {fail}", nodes[i])));
        }
        match out.as_mut() {
            Some(t) => t.append(piece),
            None => out = Some(piece),
        }
    }
    Ok(out.expect("at least one shot"))
}

const FIRST_WINDOW: f64 = 0.05;
const MIN_WINDOW_STEP: f64 = 1e-4;
const STAGE_ITERATIONS: usize = 12;

/// Solves `u(0) = u0`, `u'(t_k) = 0` on `[t_k, 0]`.
///
/// Newton first starts from the rest state at `u0`. If that fails the
/// window is grown from `[-0.05, 0]` to `[t_k, 0]` with adaptive increments,
/// each stage seeded by the previous solution. Returns the best iterate
/// with `converged = false` when no stage succeeds.
pub fn solve_natural_bvp(u0: TargetPoint, t_k: f64, model: &Model, cfg: &ShootingConfig) -> Result<ShootingResult> {
    if !(t_k < 0.0) || !t_k.is_finite() {
        return Err(Error::InvalidInput(format!("t_k must be negative, got {t_k}")));
    }
    if !(cfg.max_shot > 0.0) {
        return Err(Error::InvalidInput("max_shot must be positive".into()));
    }
    cfg.integrator.validate()?;
    let newton_tol = 0.1 * cfg.tol;
    let nodes = grid(t_k, cfg.max_shot);
    let shots = nodes.len() - 1;
    let full = Problem { model, cfg, nodes, u0 };
    let (mut z, mut norm, mut iterations) = newton(&full, rest_guess(u0, shots), cfg.max_iterations, newton_tol)?;

    if !(norm <= newton_tol) {
        let target = -t_k;
        let mut prev: Option<Trajectory> = None;
        let mut done = 0.0;
        let mut step = FIRST_WINDOW.min(target);
        while done < target && step >= MIN_WINDOW_STEP && iterations < 50 * cfg.max_iterations {
            let tau = (done + step).min(target);
            let nodes = grid(-tau, cfg.max_shot);
            let guess = match &prev {
                Some(p) => guess_from(p, &nodes),
                None => rest_guess(u0, nodes.len() - 1),
            };
            let stage = Problem { model, cfg, nodes, u0 };
            let (zs, ns, it) = newton(&stage, guess, STAGE_ITERATIONS, newton_tol)?;
            iterations += it;
            if ns <= newton_tol {
                prev = Some(shots_run(&zs, &stage.nodes, model, cfg)?);
                done = tau;
                step = (2.0 * step).min(cfg.max_shot);
                if done >= target {
                    (z, norm) = (zs, ns);
                }
            } else {
                step *= 0.5;
            }
        }
    }

    let trajectory = shots_run(&z, &full.nodes, model, cfg)?;
    let initial_velocity = trajectory.last().state.vel;
    let residual = norm;
    let converged = residual <= cfg.tol * (1.0 + initial_velocity[0].hypot(initial_velocity[1]));
    Ok(ShootingResult { u0, t_k, initial_velocity, residual, iterations, converged, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    #[test]
    fn zero_potential_gives_rest() {
        let model = Model::zero_potential(ModelParams::demo()).unwrap();
        let u0 = TargetPoint::new(0.7, 0.3);
        let res = solve_natural_bvp(u0, -3.0, &model, &ShootingConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.residual <= 1e-10, "{}", res.residual);
        assert_eq!(res.initial_velocity, [0.0, 0.0]);
    }

    #[test]
    fn recovers_forward_run_from_rest() {
        // start at rest at t = 0, read u(T) and solve on [-T, 0]
        let model = Model::new(ModelParams::demo()).unwrap();
        let s0 = State::at_rest(TargetPoint::new(0.3, 0.6), 0.0);
        let t_len = 1.5;
        let cfg = ShootingConfig::default();
        let fwd = integrate(s0, &model, &cfg.integrator.with_span(0.0, t_len), &[]).unwrap();
        let u_t = fwd.last().state;
        let res = solve_natural_bvp(u_t.pt, -t_len, &model, &cfg).unwrap();
        assert!(res.converged, "{} after {}", res.residual, res.iterations);
        for k in 0..=30 {
            let t = t_len * k as f64 / 30.0;
            let a = fwd.state_at(t).unwrap();
            let b = res.trajectory.state_at(t - t_len).unwrap();
            assert!((a.pt.theta - b.pt.theta).abs() < 1e-6 && (a.pt.y - b.pt.y).abs() < 1e-6);
        }
    }

    #[test]
    fn long_window_in_fast_oscillating_potential() {
        let model = Model::new(ModelParams::demo().with_kappa(0.02)).unwrap();
        let u0 = TargetPoint::new(std::f64::consts::FRAC_PI_2, 0.5);
        let res = solve_natural_bvp(u0, -10.0, &model, &ShootingConfig::default()).unwrap();
        assert!(res.converged && res.residual <= 1e-8, "{}", res.residual);
        let first = res.trajectory.first().state;
        assert_eq!(first.t, -10.0);
        assert!(first.vel[0].hypot(first.vel[1]) <= 1e-8);
        let last = res.trajectory.last().state;
        assert!((last.pt.theta - u0.theta).abs() <= 1e-8 && (last.pt.y - u0.y).abs() <= 1e-8);
    }

    #[test]
    fn grid_runs_back_from_zero() {
        assert_eq!(grid(-1.2, 0.5), vec![-1.2, -1.0, -0.5, 0.0]);
        assert_eq!(grid(-1.0, 0.5), vec![-1.0, -0.5, 0.0]);
        assert_eq!(grid(-0.2, 0.5), vec![-0.2, 0.0]);
    }

    #[test]
    fn rejects_nonnegative_window() {
        let model = Model::new(ModelParams::demo()).unwrap();
        assert!(solve_natural_bvp(TargetPoint::new(0.0, 0.5), 0.0, &model, &ShootingConfig::default()).is_err());
        assert!(solve_natural_bvp(TargetPoint::new(0.0, 0.5), 2.0, &model, &ShootingConfig::default()).is_err());
    }
}
