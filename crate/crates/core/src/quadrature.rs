//! Gauss-Legendre rules.

const GL7_NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];

const GL7_WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// 7-point Gauss-Legendre on `[a, b]` (exact for polynomials of degree 13).
/// `b < a` gives the signed integral.
pub fn gauss7(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL7_NODES.iter().zip(GL7_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Longest panel used when integrating along trajectories. Steps of the
/// integrator may be long where the motion is slow while the weight
/// `e^{alpha t}` still varies.
pub const MAX_PANEL: f64 = 0.125;

/// `gauss7` on equal panels no longer than `max_len`.
pub fn gauss7_composite(a: f64, b: f64, max_len: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = ((b - a).abs() / max_len).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n).map(|i| gauss7(a + h * i as f64, a + h * (i + 1) as f64, &mut f)).sum()
}

/// Adaptive bisection driven by the difference between one 7-point panel
/// and its two halves.
pub fn adaptive(a: f64, b: f64, tol: f64, f: &impl Fn(f64) -> f64) -> f64 {
    fn rec(a: f64, b: f64, whole: f64, tol: f64, depth: u32, f: &impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss7(a, mid, f);
        let right = gauss7(mid, b, f);
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        rec(a, mid, left, 0.5 * tol, depth - 1, f) + rec(mid, b, right, 0.5 * tol, depth - 1, f)
    }
    rec(a, b, gauss7(a, b, f), tol, 48, f)
}
