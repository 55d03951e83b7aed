use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::Trajectory;
use crate::energy::density_profile;
use crate::error::{Error, Result};

/// Angle of a slowly moving sample close to the axis, a finite-scale
/// stand-in for the angle of a tangent map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentEstimate {
    pub t: f64,
    pub theta_lifted: f64,
    /// `theta_lifted` reduced to `[0, 2 pi)`.
    pub theta: f64,
    pub y: f64,
    pub speed: f64,
    /// Density ratio at `t`.
    pub density: f64,
}

/// Samples with `y <= y_threshold` and `|u'| <= speed_threshold`. An empty
/// list means no sample qualified.
pub fn tangent_angle_estimates(traj: &Trajectory, y_threshold: f64, speed_threshold: f64) -> Result<Vec<TangentEstimate>> {
    if !(y_threshold > 0.0 && speed_threshold > 0.0) {
        return Err(Error::InvalidInput("thresholds must be positive".into()));
    }
    let mut picked: Vec<_> = traj
        .samples
        .iter()
        .map(|s| s.state)
        .filter(|s| s.pt.y <= y_threshold && s.speed_sq().sqrt() <= speed_threshold)
        .collect();
    picked.sort_by(|a, b| a.t.total_cmp(&b.t));
    let times: Vec<f64> = picked.iter().map(|s| s.t).collect();
    let densities = density_profile(traj, &times)?.theta_values;
    Ok(picked
        .iter()
        .zip(densities)
        .map(|(s, density)| TangentEstimate {
            t: s.t,
            theta_lifted: s.pt.theta,
            theta: s.pt.theta.rem_euclid(2.0 * PI),
            y: s.pt.y,
            speed: s.speed_sq().sqrt(),
            density,
        })
        .collect())
}

/// `(t, theta)` at the first time `y` reaches each level, `None` for levels
/// never reached.
pub fn angles_at_y_levels(traj: &Trajectory, levels: &[f64]) -> Vec<Option<(f64, f64)>> {
    levels
        .iter()
        .map(|&level| {
            let start = traj.first().state;
            if start.pt.y == level {
                return Some((start.t, start.pt.theta));
            }
            let below = start.pt.y < level;
            for seg in &traj.segments {
                let y_end = seg.eval(seg.t1)[1];
                if (y_end < level) == below {
                    continue;
                }
                let (mut lo, mut hi) = (seg.t0, seg.t1);
                for _ in 0..200 {
                    if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs()) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    if (seg.eval(mid)[1] < level) == below {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some((hi, seg.eval(hi)[0]));
            }
            None
        })
        .collect()
}
