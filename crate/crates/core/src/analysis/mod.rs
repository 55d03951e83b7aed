//! Seed family, winding diagnostics, natural-boundary shooting, the
//! minimality probe and the Hardy inequality check.

mod hardy;
mod minimality;
mod shooting;
mod tangent;
mod winding;

pub use hardy::{hardy_check, random_piecewise_linear, HardyResult, PiecewiseLinear, RadialProfile};
pub use minimality::{minimality_probe, MinimalityReport};
pub use shooting::{solve_natural_bvp, ShootingConfig, ShootingResult};
pub use tangent::{angles_at_y_levels, tangent_angle_estimates, TangentEstimate};
pub use winding::{winding_record, VSign, WindingRecord, CONTACT_TOL};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{Model, State};
use crate::error::{Error, Result};
use crate::potential::{strip_index, TargetPoint};

/// Rest state at `(pi/2, 1/(2 n pi))`, which lies in strip `2n` where
/// `V < 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub n: u32,
    pub theta0: f64,
    pub y0: f64,
    pub vel0: [f64; 2],
}

impl SeedSpec {
    pub fn new(n: i64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput(format!("seed index must be >= 1, got {n}")));
        }
        let n = u32::try_from(n).map_err(|_| Error::InvalidInput(format!("seed index {n} too large")))?;
        Ok(Self { n, theta0: PI / 2.0, y0: 1.0 / (2.0 * f64::from(n) * PI), vel0: [0.0, 0.0] })
    }

    pub fn point(&self) -> TargetPoint {
        TargetPoint::new(self.theta0, self.y0)
    }

    pub fn state(&self) -> State {
        State { pt: self.point(), vel: self.vel0, t: 0.0 }
    }

    pub fn strip(&self) -> i64 {
        strip_index(self.point())
    }
}

/// Seed `n` at `t = 0`.
pub fn seed(n: i64) -> Result<State> {
    Ok(SeedSpec::new(n)?.state())
}

/// `h_crit - H(seed_n)`, positive when the seed lies below the critical
/// level.
pub fn seed_gap(n: i64, model: &Model) -> Result<f64> {
    Ok(model.derived.h_crit - model.hamiltonian(&seed(n)?))
}
