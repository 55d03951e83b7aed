use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive;

/// Radial test function on `[0, 1]`, smooth between its breakpoints.
pub trait RadialProfile {
    fn value(&self, r: f64) -> f64;
    fn derivative(&self, r: f64) -> f64;
    /// Interior points where the profile may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Linear interpolation between knots `(r_i, w_i)` with `r_0 = 0` and
/// `r_last = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidInput("need at least two knots".into()));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(Error::InvalidInput("knots must start at r = 0 and end at r = 1".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) || knots.iter().any(|k| !k.1.is_finite()) {
            return Err(Error::InvalidInput("knots must be finite with increasing radii".into()));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn piece(&self, r: f64) -> usize {
        let i = self.knots.partition_point(|k| k.0 <= r);
        i.clamp(1, self.knots.len() - 1) - 1
    }
}

impl RadialProfile for PiecewiseLinear {
    fn value(&self, r: f64) -> f64 {
        let i = self.piece(r);
        let (r0, w0) = self.knots[i];
        let (r1, w1) = self.knots[i + 1];
        let s = (r - r0) / (r1 - r0);
        w0 * (1.0 - s) + w1 * s
    }

    fn derivative(&self, r: f64) -> f64 {
        let i = self.piece(r);
        let (r0, w0) = self.knots[i];
        let (r1, w1) = self.knots[i + 1];
        (w1 - w0) / (r1 - r0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots[1..self.knots.len() - 1].iter().map(|k| k.0).collect()
    }
}

/// Random piecewise-linear profile with `pieces` pieces, values in
/// `[-1, 1]` and `w(1) = 0`.
pub fn random_piecewise_linear(rng: &mut impl Rng, pieces: usize) -> PiecewiseLinear {
    let pieces = pieces.max(1);
    let mut radii: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.01..0.99)).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut knots = vec![(0.0, rng.gen_range(-1.0..1.0))];
    knots.extend(radii.into_iter().map(|r| (r, rng.gen_range(-1.0..1.0))));
    knots.push((1.0, 0.0));
    PiecewiseLinear::new(knots).expect("generated knots are ordered")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyResult {
    pub lhs: f64,
    pub rhs: f64,
}

impl HardyResult {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol * (1.0 + self.rhs.abs())
    }
}

const HARDY_TOL: f64 = 1e-13;

/// Both sides of `(m-p)^2 int w^2 r^{m-1-p} dr <= 4 int w'^2 r^{m+1-p} dr`
/// on `[0, 1]`.
pub fn hardy_check(m: u32, p: f64, w: &dyn RadialProfile) -> Result<HardyResult> {
    let m = f64::from(m);
    if !(m > p) || !(p > 0.0) {
        return Err(Error::InvalidInput(format!("need m > p > 0, got m = {m}, p = {p}")));
    }
    let end = w.value(1.0);
    if end.abs() > 1e-14 {
        return Err(Error::InvalidInput(format!("test function must vanish at r = 1, w(1) = {end}")));
    }
    let mut cuts = vec![0.0];
    let mut bps = w.breakpoints();
    bps.retain(|r| *r > 0.0 && *r < 1.0);
    bps.sort_by(f64::total_cmp);
    cuts.extend(bps);
    cuts.push(1.0);

    let (mut lhs, mut rhs) = (0.0, 0.0);
    for c in cuts.windows(2) {
        let (a, b) = (c[0], c[1]);
        // evaluate inside the piece so one-sided derivatives are used
        let inner = |r: f64| r.clamp(a + 1e-15 * (b - a), b - 1e-15 * (b - a));
        lhs += adaptive(a, b, HARDY_TOL, &|r: f64| {
            let v = w.value(inner(r));
            v * v * r.powf(m - 1.0 - p)
        });
        rhs += adaptive(a, b, HARDY_TOL, &|r: f64| {
            let d = w.derivative(inner(r));
            d * d * r.powf(m + 1.0 - p)
        });
    }
    Ok(HardyResult { lhs: (m - p).powi(2) * lhs, rhs: 4.0 * rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Smooth;

    impl RadialProfile for Smooth {
        fn value(&self, r: f64) -> f64 {
            1.0 - r * r
        }
        fn derivative(&self, r: f64) -> f64 {
            -2.0 * r
        }
    }

    #[test]
    fn zero_function_gives_equality() {
        let w = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let res = hardy_check(7, 2.0, &w).unwrap();
        assert_eq!((res.lhs, res.rhs), (0.0, 0.0));
    }

    #[test]
    fn linear_ramp_closed_form() {
        let w = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let res = hardy_check(7, 2.0, &w).unwrap();
        assert!((res.lhs - 5.0 / 21.0).abs() < 1e-12, "{}", res.lhs);
        assert!((res.rhs - 4.0 / 7.0).abs() < 1e-12, "{}", res.rhs);
    }

    #[test]
    fn parabola_closed_form() {
        // m = 7, p = 2: 25 int (1-r^2)^2 r^4 = 25 (1/5 - 2/7 + 1/9); 4 int 4 r^2 r^6 = 16/9
        let res = hardy_check(7, 2.0, &Smooth).unwrap();
        assert!((res.lhs - 25.0 * (1.0 / 5.0 - 2.0 / 7.0 + 1.0 / 9.0)).abs() < 1e-12);
        assert!((res.rhs - 16.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn knot_split_does_not_change_integrals() {
        let a = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let b = PiecewiseLinear::new(vec![(0.0, 1.0), (0.3, 0.7), (1.0, 0.0)]).unwrap();
        let (ra, rb) = (hardy_check(7, 2.0, &a).unwrap(), hardy_check(7, 2.0, &b).unwrap());
        assert!((ra.lhs - rb.lhs).abs() < 1e-13 && (ra.rhs - rb.rhs).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        let w = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.5)]).unwrap();
        assert!(hardy_check(7, 2.0, &w).is_err());
        let z = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        assert!(hardy_check(2, 2.0, &z).is_err());
        assert!(PiecewiseLinear::new(vec![(0.0, 1.0), (0.5, 1.0), (0.5, 0.0), (1.0, 0.0)]).is_err());
        assert!(PiecewiseLinear::new(vec![(0.1, 1.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn random_profiles_satisfy_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pieces = rng.gen_range(1..8);
            let w = random_piecewise_linear(&mut rng, pieces);
            assert_eq!(w.value(1.0), 0.0);
            let res = hardy_check(7, 2.0, &w).unwrap();
            assert!(res.holds(1e-12), "{res:?} {:?}", w.knots());
        }
    }
}
