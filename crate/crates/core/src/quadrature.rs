//! Numerical-quadrature evaluation of the drive integrals.
//!
//! These routines integrate the trajectory and entangling-phase integrands directly and
//! share no code with the closed forms in [`crate::drive`]. They back the `--oracle`
//! cross-check of the command-line tool and the test suite.

use num_complex::Complex64;

use crate::chain::ModeStructure;
use crate::drive::{CouplingResult, PulseShape, TrajectorySet};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    GaussRule { nodes, weights }
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Returns the Kronrod estimate, the Gauss-Kronrod difference and `∫|f|`.
fn gk15(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = Complex64::new(0.0, 0.0);
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut magnitude = 0.0;
    for (j, (&x, &w)) in KRONROD_NODES.iter().zip(&KRONROD_WEIGHTS).enumerate() {
        let values = if x == 0.0 { [f(c), Complex64::new(0.0, 0.0)] } else { [f(c - h * x), f(c + h * x)] };
        let sum = values[0] + values[1];
        kronrod += sum * w;
        magnitude += (values[0].norm() + values[1].norm()) * w;
        if j % 2 == 1 {
            gauss += sum * GAUSS7_WEIGHTS[j / 2];
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).norm(), magnitude * h.abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of a complex integrand to an absolute
/// tolerance. Returns the value and the summed error estimate.
pub fn adaptive_gauss_kronrod(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, abs_tol: f64) -> (Complex64, f64) {
    adaptive_gauss_kronrod_with_noise(f, a, b, abs_tol, 0.0)
}

/// Panels examined before the remaining ones are accepted as they stand.
const PANEL_BUDGET: usize = 100_000;

/// As [`adaptive_gauss_kronrod`] for an integrand whose values carry a relative rounding
/// error `noise` (for instance from a large phase argument). Panels whose error estimate
/// is already below that noise, or below ~50 ulp of `∫|f|`, are not refined further.
pub fn adaptive_gauss_kronrod_with_noise(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    abs_tol: f64,
    noise: f64,
) -> (Complex64, f64) {
    if a == b {
        return (Complex64::new(0.0, 0.0), 0.0);
    }
    let mut stack = vec![(a, b, abs_tol, 0u32)];
    let mut total = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut examined = 0;
    while let Some((lo, hi, tol, depth)) = stack.pop() {
        let (value, err, magnitude) = gk15(f, lo, hi);
        examined += 1;
        let floor = (50.0 * f64::EPSILON + noise) * magnitude;
        if err <= tol.max(floor) || depth >= 50 || examined >= PANEL_BUDGET {
            total += value;
            error += err;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, 0.5 * tol, depth + 1));
            stack.push((lo, mid, 0.5 * tol, depth + 1));
        }
    }
    (total, error)
}

/// Target absolute accuracy of [`alpha_by_quadrature`], in phase-space units.
pub const ALPHA_ABS_TOL: f64 = 1e-11;

/// Displacements obtained by integrating `i η Ω(t) sin(μt) e^{iω t}` segment by segment.
pub fn alpha_by_quadrature(pulse: &PulseShape, modes: &ModeStructure) -> TrajectorySet {
    let h = pulse.segment_duration();
    let mu = pulse.detuning_mu;
    let integrals: Vec<Complex64> = modes
        .mode_freqs
        .iter()
        .map(|&omega| {
            let integrand = |t: f64| I * (mu * t).sin() * Complex64::from_polar(1.0, omega * t);
            let peak_coupling = modes.lamb_dicke.amax().max(1.0);
            pulse
                .segments
                .iter()
                .enumerate()
                .filter(|(_, amp)| **amp != 0.0)
                .map(|(s, &amp)| {
                    let tol = 0.1 * ALPHA_ABS_TOL / (amp.abs() * peak_coupling * pulse.n_segments() as f64);
                    let (lo, hi) = (s as f64 * h, (s + 1) as f64 * h);
                    // Rounding of the phase arguments μt and ωt.
                    let noise = 4.0 * f64::EPSILON * (mu.abs() + omega.abs()) * hi;
                    amp * adaptive_gauss_kronrod_with_noise(&integrand, lo, hi, tol, noise).0
                })
                .sum()
        })
        .collect();
    let (a, b) = (pulse.target_ions.0 - 1, pulse.target_ions.1 - 1);
    let alpha = [a, b].map(|i| {
        integrals
            .iter()
            .enumerate()
            .map(|(m, v)| v * modes.lamb_dicke[(i, m)])
            .collect()
    });
    TrajectorySet { alpha, sampled_paths: None }
}

/// Panel boundaries covering `[0, τ]`: every segment edge is a boundary and no panel
/// spans more than `max_phase` radians of the fastest oscillation.
fn panels(pulse: &PulseShape, fastest: f64, max_phase: f64) -> Vec<(f64, f64, f64)> {
    let h = pulse.segment_duration();
    let per_segment = ((fastest * h / max_phase).ceil() as usize).max(1);
    let width = h / per_segment as f64;
    let mut out = Vec::with_capacity(per_segment * pulse.n_segments());
    for (s, &amp) in pulse.segments.iter().enumerate() {
        let start = s as f64 * h;
        for p in 0..per_segment {
            let lo = start + p as f64 * width;
            let hi = if p + 1 == per_segment { start + h } else { lo + width };
            out.push((lo, hi, amp));
        }
    }
    out
}

fn triangle_panels(pulse: &PulseShape, omega: f64, order: usize) -> f64 {
    let mu = pulse.detuning_mu;
    let fastest = omega.abs() + mu.abs() + 1.0 / pulse.gate_time;
    let rule = gauss_legendre(order);
    let g = |t: f64, amp: f64| Complex64::from_polar(amp * (mu * t).sin(), omega * t);

    let mut total = 0.0;
    let mut prefix = Complex64::new(0.0, 0.0);
    for (lo, hi, amp) in panels(pulse, fastest, 1.0) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        // Rectangle against all earlier panels.
        let mut panel = Complex64::new(0.0, 0.0);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            panel += g(mid + half * x, amp) * (w * half);
        }
        total += (panel * prefix.conj()).im;
        prefix += panel;
        // Diagonal triangle via the collapsed map t' = lo + L x, t = lo + (t' - lo) y.
        let len = hi - lo;
        let mut tri = 0.0;
        for (&xo, &wo) in rule.nodes.iter().zip(&rule.weights) {
            let x = 0.5 * (xo + 1.0);
            let tp = lo + len * x;
            let outer = g(tp, amp);
            let mut inner = Complex64::new(0.0, 0.0);
            for (&yi, &wi) in rule.nodes.iter().zip(&rule.weights) {
                let y = 0.5 * (yi + 1.0);
                inner += g(lo + (tp - lo) * y, amp) * (0.5 * wi);
            }
            tri += (outer * inner.conj()).im * (0.5 * wo) * len * len * x;
        }
        total += tri;
    }
    total
}

/// Entangling phase from composite Gauss quadrature over the triangle
/// `0 ≤ t ≤ t' ≤ τ`, split into rectangles and diagonal triangles.
pub fn chi_by_quadrature(pulse: &PulseShape, modes: &ModeStructure) -> CouplingResult {
    chi_by_quadrature_with_error(pulse, modes).0
}

/// As [`chi_by_quadrature`], also returning the difference between two rule orders.
pub fn chi_by_quadrature_with_error(pulse: &PulseShape, modes: &ModeStructure) -> (CouplingResult, f64) {
    let (a, b) = (pulse.target_ions.0 - 1, pulse.target_ions.1 - 1);
    let mut error = 0.0;
    let per_mode_chi: Vec<f64> = modes
        .mode_freqs
        .iter()
        .enumerate()
        .map(|(m, &omega)| {
            let weight = 2.0 * modes.lamb_dicke[(a, m)] * modes.lamb_dicke[(b, m)];
            let fine = triangle_panels(pulse, omega, 24);
            let coarse = triangle_panels(pulse, omega, 16);
            error += (weight * (fine - coarse)).abs();
            weight * fine
        })
        .collect();
    (CouplingResult { chi: per_mode_chi.iter().sum(), per_mode_chi }, error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        for n in [1, 2, 5, 16, 24] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13);
            // x^(2n-2) is integrated exactly.
            let p = 2 * n - 2;
            let got: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
            assert!((got - 2.0 / (p as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_integrates_oscillatory_function() {
        let f = |t: f64| Complex64::from_polar(1.0, 40.0 * t);
        let (v, _) = adaptive_gauss_kronrod(&f, 0.0, 3.0, 1e-13);
        let exact = (Complex64::from_polar(1.0, 120.0) - 1.0) / (I * 40.0);
        assert!((v - exact).norm() < 1e-12);
    }
}
