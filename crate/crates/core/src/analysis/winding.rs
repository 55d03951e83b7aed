use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{DenseSegment, EventKind, Trajectory};
use crate::potential::{strip_index, wall_distance, TargetPoint};

/// Distance to `{V = 0}` below which a trajectory counts as touching it.
pub const CONTACT_TOL: f64 = 1e-8;

/// Interior points checked per step in addition to the step ends.
const PROBES_PER_STEP: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VSign {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingRecord {
    pub theta_ref: f64,
    /// Times at which the lifted angle meets `theta_ref + 2 pi Z`.
    pub crossing_times: Vec<f64>,
    pub lifted_theta_range: (f64, f64),
    /// `theta(end) - theta(start)` in the direction of integration.
    pub theta_change: f64,
    /// Strip of the starting point.
    pub strip_index: i64,
    pub sign_of_v: VSign,
    pub strip_constant: bool,
    pub sign_constant: bool,
    /// Change of `1/y` over the run.
    pub delta_inv_y: f64,
    /// `floor((|delta(1/y)| - pi) / 2 pi)`, the crossings forced by strip
    /// confinement.
    pub predicted_min_crossings: u64,
    pub min_wall_distance: f64,
    pub min_abs_y: f64,
    /// False when the run comes within [`CONTACT_TOL`] of `{V = 0}` or
    /// leaves its strip.
    pub valid: bool,
}

impl WindingRecord {
    pub fn crossings(&self) -> usize {
        self.crossing_times.len()
    }
}

fn sign_of(pt: TargetPoint) -> VSign {
    // V = -e^{-kappa/y^2} sin(theta + 1/y)
    if pt.phase().sin() > 0.0 {
        VSign::Negative
    } else {
        VSign::Positive
    }
}

fn turn(theta: f64, theta_ref: f64) -> f64 {
    ((theta - theta_ref) / (2.0 * PI)).floor()
}

fn bisect_level(seg: &DenseSegment, theta_ref: f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    let target = theta_ref + 2.0 * PI * level;
    let g = |t: f64| seg.eval(t)[0] - target;
    let glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs()) {
            break;
        }
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

/// Crossings of `theta_ref + 2 pi Z` by the lifted angle, located on the
/// dense output, together with strip and sign diagnostics.
pub fn winding_record(traj: &Trajectory, theta_ref: f64) -> WindingRecord {
    let start = traj.first().state;
    let end = traj.last().state;
    let strip0 = strip_index(start.pt);
    let sign0 = sign_of(start.pt);

    let mut crossing_times = Vec::new();
    let mut lo = start.pt.theta;
    let mut hi = start.pt.theta;
    let mut min_wall = wall_distance(start.pt);
    let mut min_y = start.pt.y.abs();
    let mut strip_constant = true;
    let mut sign_constant = true;

    let mut visit = |pt: TargetPoint| {
        lo = lo.min(pt.theta);
        hi = hi.max(pt.theta);
        min_wall = min_wall.min(wall_distance(pt));
        min_y = min_y.min(pt.y.abs());
        strip_constant &= strip_index(pt) == strip0;
        sign_constant &= sign_of(pt) == sign0;
    };

    for seg in &traj.segments {
        let n = PROBES_PER_STEP + 1;
        let ts: Vec<f64> = (0..=n).map(|i| seg.t0 + (seg.t1 - seg.t0) * i as f64 / n as f64).collect();
        let thetas: Vec<f64> = ts.iter().map(|&t| seg.eval(t)[0]).collect();
        for &t in &ts[1..] {
            visit(seg.state(t).pt);
        }
        for i in 0..n {
            let (k0, k1) = (turn(thetas[i], theta_ref), turn(thetas[i + 1], theta_ref));
            if k0 == k1 {
                continue;
            }
            // levels k with theta crossing theta_ref + 2 pi k
            let levels: Vec<f64> = if k1 > k0 {
                ((k0 as i64 + 1)..=(k1 as i64)).map(|k| k as f64).collect()
            } else {
                ((k1 as i64 + 1)..=(k0 as i64)).rev().map(|k| k as f64).collect()
            };
            for level in levels {
                crossing_times.push(bisect_level(seg, theta_ref, level, ts[i], ts[i + 1]));
            }
        }
    }

    let sign_events = traj
        .events
        .iter()
        .any(|e| matches!(e.kind, EventKind::StripChange { .. } | EventKind::PotentialSign { .. }));
    strip_constant &= !sign_events;
    let delta_inv_y = 1.0 / end.pt.y - 1.0 / start.pt.y;
    let predicted = ((delta_inv_y.abs() - PI) / (2.0 * PI)).floor().max(0.0) as u64;
    let valid = strip_constant && sign_constant && min_wall > CONTACT_TOL && min_y > CONTACT_TOL;

    WindingRecord {
        theta_ref,
        crossing_times,
        lifted_theta_range: (lo, hi),
        theta_change: end.pt.theta - start.pt.theta,
        strip_index: strip0,
        sign_of_v: sign0,
        strip_constant,
        sign_constant,
        delta_inv_y,
        predicted_min_crossings: predicted,
        min_wall_distance: min_wall,
        min_abs_y: min_y,
        valid,
    }
}
