//! Model parameters `(m, p, B0, kappa)` and the constants of the reduced
//! one-dimensional system derived from them.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Parameters of the equivariant model.
///
/// `m` is the domain dimension, `p` the energy exponent, `b0` the metric
/// constant and `kappa` the sharpness of the potential
/// `V = -exp(-kappa / y^2) sin(theta + 1/y)`. `kappa = 1` is White's
/// original potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub m: u32,
    pub p: f64,
    pub b0: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Dimension of the sphere factor. Only checked, never used.
    #[serde(default)]
    pub n_sphere: Option<u32>,
}

fn default_kappa() -> f64 {
    1.0
}

impl ModelParams {
    pub fn new(m: u32, p: f64, b0: f64, kappa: f64) -> Self {
        Self { m, p, b0, kappa, n_sphere: None }
    }

    /// `(m, p, B0) = (7, 2, 10)` with White's potential.
    pub fn demo() -> Self {
        Self::new(7, 2.0, 10.0, 1.0)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParams(format!("m = {} must be at least 2", self.m)));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::InvalidParams(format!("p = {} must exceed 1", self.p)));
        }
        if !(f64::from(self.m) > self.p) {
            return Err(Error::InvalidParams(format!(
                "m = {} must exceed p = {} (weight exponent m - p would be <= 0)",
                self.m, self.p
            )));
        }
        if !(self.b0.is_finite() && self.b0 > 0.0) {
            return Err(Error::InvalidParams(format!("B0 = {} must be positive", self.b0)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParams(format!("kappa = {} must be positive", self.kappa)));
        }
        if let Some(n) = self.n_sphere {
            if n + 1 < self.m {
                return Err(Error::InvalidParams(format!(
                    "sphere dimension n = {n} must be at least m - 1 = {}",
                    self.m - 1
                )));
            }
        }
        Ok(())
    }
}

/// Constants of the reduced system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    /// Weight exponent `m - p`.
    pub alpha: f64,
    /// Lagrangian exponent `p / 2`.
    pub beta: f64,
    /// Conformal factor on the zero set of `V`, `(m - 1) B0`.
    pub bhat0: f64,
    /// Hamiltonian level of rest states on `{V = 0}`, `-bhat0^beta`.
    pub h_crit: f64,
    /// Area of the unit sphere in `R^m`.
    pub omega: f64,
    /// Growth rate `alpha 2 beta / (2 beta - 1)` of `H` on `{H >= 0}`.
    pub c_growth: f64,
}

pub fn derive(params: &ModelParams) -> Result<Derived> {
    params.validate()?;
    let alpha = f64::from(params.m) - params.p;
    let beta = params.p / 2.0;
    let bhat0 = f64::from(params.m - 1) * params.b0;
    Ok(Derived {
        alpha,
        beta,
        bhat0,
        h_crit: -bhat0.powf(beta),
        omega: unit_sphere_area(params.m),
        c_growth: alpha * 2.0 * beta / (2.0 * beta - 1.0),
    })
}

/// `|S^{m-1}| = 2 pi^{m/2} / Gamma(m/2)`, evaluated through the exact
/// recursion `|S^{m-1}| = 2 pi / (m - 2) |S^{m-3}|`.
pub fn unit_sphere_area(m: u32) -> f64 {
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / f64::from(m - 2) * unit_sphere_area(m - 2),
    }
}

/// One clause of the admissibility test with its signed margin
/// (positive means satisfied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub holds: bool,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub clauses: Vec<Clause>,
}

/// Stability condition `4(m-1) < (m-p)^2`, `m > p`, and the explicit
/// metric floor `B0 > sup|V| + sup|grad V| + 1`.
pub fn admissible(params: &ModelParams, sup_v: f64, sup_grad_v: f64) -> AdmissibilityReport {
    let m = f64::from(params.m);
    let stability = (m - params.p).powi(2) - 4.0 * (m - 1.0);
    let weight = m - params.p;
    let floor = params.b0 - (sup_v + sup_grad_v + 1.0);
    let clauses = vec![
        Clause { name: "4(m-1) < (m-p)^2".into(), holds: stability > 0.0, margin: stability },
        Clause { name: "m > p".into(), holds: weight > 0.0, margin: weight },
        Clause { name: "B0 > sup|V| + sup|grad V| + 1".into(), holds: floor > 0.0, margin: floor },
    ];
    AdmissibilityReport { admissible: clauses.iter().all(|c| c.holds), clauses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derive_demo_parameters() {
        let d = derive(&ModelParams::demo()).unwrap();
        assert_eq!(d.alpha, 5.0);
        assert_eq!(d.beta, 1.0);
        assert_eq!(d.bhat0, 60.0);
        assert_eq!(d.h_crit, -60.0);
        assert_eq!(d.c_growth, 10.0);
        assert!((d.omega - 16.0 * PI.powi(3) / 15.0).abs() < 1e-12);
    }

    #[test]
    fn derive_p3() {
        let d = derive(&ModelParams::new(9, 3.0, 10.0, 1.0)).unwrap();
        assert_eq!(d.alpha, 6.0);
        assert_eq!(d.beta, 1.5);
        assert_eq!(d.bhat0, 80.0);
        // 80^{3/2} = 320 sqrt(5)
        assert!((d.h_crit + 320.0 * 5f64.sqrt()).abs() < 1e-10);
        assert!((d.h_crit + 715.54).abs() < 1e-2);
        assert!(d.c_growth > d.alpha);
    }

    #[test]
    fn rejects_degenerate_weight() {
        assert!(matches!(derive(&ModelParams::new(2, 2.0, 10.0, 1.0)), Err(Error::InvalidParams(_))));
        assert!(derive(&ModelParams::new(3, 3.5, 10.0, 1.0)).is_err());
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(ModelParams::new(7, 2.0, 10.0, 0.0).validate().is_err());
        assert!(ModelParams::new(7, 1.0, 10.0, 1.0).validate().is_err());
        assert!(ModelParams::new(7, 2.0, -1.0, 1.0).validate().is_err());
        let mut p = ModelParams::demo();
        p.n_sphere = Some(5);
        assert!(p.validate().is_err());
        p.n_sphere = Some(6);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn sphere_areas_match_gamma_formula() {
        // 2 pi^{m/2} / Gamma(m/2) for small m
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn admissibility_examples() {
        assert!(admissible(&ModelParams::demo(), 1.0, 1.0).admissible);
        let r = admissible(&ModelParams::new(3, 2.0, 10.0, 1.0), 1.0, 1.0);
        assert!(!r.admissible);
        assert!(!r.clauses[0].holds);
        assert_eq!(r.clauses[0].margin, -7.0);
        let r = admissible(&ModelParams::new(7, 2.0, 1.0, 1.0), 1.0, 1.0);
        assert!(!r.admissible);
        assert!(r.clauses[0].holds && !r.clauses[2].holds);
    }

    proptest! {
        #[test]
        fn admissibility_monotone_in_b0(m in 2u32..40, p in 1.01f64..10.0, b0 in 0.1f64..50.0, extra in 0.0f64..50.0) {
            let lo = admissible(&ModelParams::new(m, p, b0, 1.0), 1.0, 1.0);
            let hi = admissible(&ModelParams::new(m, p, b0 + extra, 1.0), 1.0, 1.0);
            prop_assert!(!lo.admissible || hi.admissible);
        }

        #[test]
        fn derive_is_deterministic(m in 3u32..30, p in 1.01f64..2.9, b0 in 0.1f64..100.0) {
            let params = ModelParams::new(m, p, b0, 1.0);
            let a = derive(&params).unwrap();
            let b = derive(&params).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.alpha > 0.0 && a.beta > 0.5 && a.h_crit < 0.0 && a.c_growth > a.alpha);
        }
    }
}
