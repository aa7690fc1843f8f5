//! Phase-space trajectories and entangling phase for piecewise-constant drives.
//!
//! For a drive `Ω(t)` applied identically to both target ions, mode `m` is displaced by
//!
//! ```text
//! α_{i,m}(τ) = i η_{i,m} ∫₀^τ Ω(t) sin(μt) e^{iω_m t} dt
//! ```
//!
//! and the pair accumulates
//!
//! ```text
//! χ(τ) = 2 Σ_m η_{a,m} η_{b,m} ∫₀^τ dt' ∫₀^{t'} dt Ω(t) Ω(t') sin(μt) sin(μt') sin[ω_m (t' - t)].
//! ```
//!
//! With equal-length segments both integrals reduce to sums of elementary exponential
//! integrals. Every exponential integral is written in terms of `sinc` or second divided
//! differences of `exp` over purely imaginary nodes, which stay finite and accurate when
//! `μ → ω_m` or `μ → 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::ModeStructure;
use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Piecewise-constant drive with equal-duration segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Beat-note detuning μ from the carrier, rad/s.
    pub detuning_mu: f64,
    /// Total gate time τ_g, seconds.
    pub gate_time: f64,
    /// Rabi amplitude of each segment, rad/s.
    pub segments: Vec<f64>,
    /// 1-based indices of the two driven ions.
    pub target_ions: (usize, usize),
}

impl PulseShape {
    pub fn new(detuning_mu: f64, gate_time: f64, segments: Vec<f64>, target_ions: (usize, usize)) -> Result<Self> {
        let pulse = PulseShape { detuning_mu, gate_time, segments, target_ions };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidPulse("at least one segment is required".into()));
        }
        if !(self.gate_time.is_finite() && self.gate_time > 0.0) {
            return Err(Error::InvalidPulse(format!("gate time must be positive, got {}", self.gate_time)));
        }
        if !self.detuning_mu.is_finite() {
            return Err(Error::InvalidPulse("detuning must be finite".into()));
        }
        if self.segments.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidPulse("segment amplitudes must be finite".into()));
        }
        let (a, b) = self.target_ions;
        if a == 0 || b == 0 || a == b {
            return Err(Error::InvalidPulse(format!("target ions must be distinct and 1-based, got ({a}, {b})")));
        }
        Ok(())
    }

    pub(crate) fn check_against(&self, modes: &ModeStructure) -> Result<()> {
        self.validate()?;
        let n = modes.n_ions();
        let (a, b) = self.target_ions;
        if a > n || b > n {
            return Err(Error::InvalidPulse(format!("target ions ({a}, {b}) outside a chain of {n} ions")));
        }
        Ok(())
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_duration(&self) -> f64 {
        self.gate_time / self.segments.len() as f64
    }

    /// Copy with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        PulseShape { segments: self.segments.iter().map(|s| s * factor).collect(), ..self.clone() }
    }

    pub fn with_detuning(&self, detuning_mu: f64) -> Self {
        PulseShape { detuning_mu, ..self.clone() }
    }

    /// Same pulse with the segment order reversed.
    pub fn reversed(&self) -> Self {
        let mut segments = self.segments.clone();
        segments.reverse();
        PulseShape { segments, ..self.clone() }
    }

    /// Same waveform described with every segment split into `factor` equal parts.
    pub fn subdivided(&self, factor: usize) -> Self {
        let segments = self.segments.iter().flat_map(|&s| std::iter::repeat_n(s, factor)).collect();
        PulseShape { segments, ..self.clone() }
    }

    pub fn amplitude_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.gate_time {
            return 0.0;
        }
        let idx = ((t / self.segment_duration()) as usize).min(self.segments.len() - 1);
        self.segments[idx]
    }

    pub fn peak_amplitude(&self) -> f64 {
        self.segments.iter().fold(0.0, |acc, s| acc.max(s.abs()))
    }

    fn ion_indices(&self) -> [usize; 2] {
        [self.target_ions.0 - 1, self.target_ions.1 - 1]
    }
}

/// Displacements of every mode through the two target ions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    /// `alpha[k][m]`: displacement of mode `m` through target ion `k` (0 = first, 1 = second).
    pub alpha: [Vec<Complex64>; 2],
    pub sampled_paths: Option<SampledPaths>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPaths {
    pub times: Vec<f64>,
    /// `alpha[k][m][t]`.
    pub alpha: [Vec<Vec<Complex64>>; 2],
}

impl TrajectorySet {
    pub fn from_alphas(alpha_a: Vec<Complex64>, alpha_b: Vec<Complex64>) -> Self {
        assert_eq!(alpha_a.len(), alpha_b.len(), "both ions must see the same modes");
        TrajectorySet { alpha: [alpha_a, alpha_b], sampled_paths: None }
    }

    pub fn n_modes(&self) -> usize {
        self.alpha[0].len()
    }

    /// Largest `|α_{i,m}|` over both ions and all modes.
    pub fn max_abs(&self) -> f64 {
        self.alpha.iter().flatten().fold(0.0, |acc, a| acc.max(a.norm()))
    }
}

/// Entangling phase between the two target ions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub chi: f64,
    pub per_mode_chi: Vec<f64>,
}

/// `sin(x) / x` with the removable singularity filled in.
#[inline]
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

#[inline]
fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// `∫_start^{start+h} e^{iνt} dt`.
#[inline]
fn exp_integral(nu: f64, start: f64, h: f64) -> Complex64 {
    cis(nu * (start + 0.5 * h)) * (h * sinc(0.5 * nu * h))
}

/// First divided difference of `exp` at the imaginary nodes `ix`, `iy`.
#[inline]
fn dd1_imag(x: f64, y: f64) -> Complex64 {
    cis(0.5 * (x + y)) * sinc(0.5 * (y - x))
}

/// Second divided difference of `exp` at the imaginary nodes `0`, `ia`, `ib`.
///
/// Equals `∫∫_{0 ≤ w ≤ v ≤ 1} exp(i a v + i (b - a) w) dw dv`.
pub(crate) fn dd2_imag(a: f64, b: f64) -> Complex64 {
    let nodes = [0.0, a, b];
    let spread = (a.abs()).max(b.abs()).max((a - b).abs());
    if spread < 0.5 {
        // Σ_k h_k(ia, ib) / (k + 2)! with h_k the complete homogeneous polynomial.
        let za = I * a;
        let zb = I * b;
        let mut h = Complex64::new(1.0, 0.0);
        let mut za_pow = Complex64::new(1.0, 0.0);
        let mut factorial = 2.0;
        let mut sum = h / factorial;
        for k in 1..30 {
            za_pow *= za;
            h = za_pow + zb * h;
            factorial *= (k + 2) as f64;
            let term = h / factorial;
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        return sum;
    }
    // Use the most distant pair as the outer nodes so the final division is by ≥ 0.5.
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let (p, q, r) = pairs
        .into_iter()
        .max_by(|x, y| {
            let dx = (nodes[x.0] - nodes[x.1]).abs();
            let dy = (nodes[y.0] - nodes[y.1]).abs();
            dx.total_cmp(&dy)
        })
        .unwrap();
    let (xp, xq, xr) = (nodes[p], nodes[q], nodes[r]);
    (dd1_imag(xr, xq) - dd1_imag(xp, xr)) / (I * (xq - xp))
}

/// `∫_seg sin(μt) e^{iωt} dt` for a segment starting at `start` of length `h`.
#[inline]
fn segment_sin_exp(mu: f64, omega: f64, start: f64, h: f64) -> Complex64 {
    (exp_integral(omega + mu, start, h) - exp_integral(omega - mu, start, h)) / (2.0 * I)
}

/// `Im ∫_a^{a+h} dt' ∫_a^{t'} dt sin(μt) sin(μt') sin[ω(t' - t)]`.
fn segment_triangle(mu: f64, omega: f64, start: f64, h: f64) -> f64 {
    // sin(μt) e^{iωt} = Σ_k c_k e^{iν_k t}
    let nus = [omega + mu, omega - mu];
    let coeffs = [Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)];
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        for k in 0..2 {
            let diff = nus[j] - nus[k];
            total += coeffs[j] * coeffs[k].conj() * cis(diff * start) * dd2_imag(nus[j] * h, diff * h);
        }
    }
    (total * h * h).im
}

/// Per-unit-amplitude mode integrals `i ∫_seg sin(μt) e^{iωt} dt` for each of `n_segments`
/// equal segments of a gate of length `gate_time`.
pub fn segment_mode_integrals(mu: f64, gate_time: f64, n_segments: usize, omega: f64) -> Vec<Complex64> {
    let h = gate_time / n_segments as f64;
    (0..n_segments)
        .map(|s| I * segment_sin_exp(mu, omega, s as f64 * h, h))
        .collect()
}

/// Shared mode integral `I_m = i ∫₀^τ Ω(t) sin(μt) e^{iω_m t} dt` of every mode.
pub fn mode_integrals(pulse: &PulseShape, modes: &ModeStructure) -> Vec<Complex64> {
    modes
        .mode_freqs
        .iter()
        .map(|&omega| {
            segment_mode_integrals(pulse.detuning_mu, pulse.gate_time, pulse.n_segments(), omega)
                .iter()
                .zip(&pulse.segments)
                .map(|(unit, amp)| unit * *amp)
                .sum()
        })
        .collect()
}

/// Mode integral of a single mode up to time `t`.
fn mode_integral_until(pulse: &PulseShape, omega: f64, t: f64) -> Complex64 {
    let h = pulse.segment_duration();
    let mut acc = Complex64::new(0.0, 0.0);
    for (s, &amp) in pulse.segments.iter().enumerate() {
        let start = s as f64 * h;
        if start >= t {
            break;
        }
        let len = (t - start).min(h);
        acc += amp * segment_sin_exp(pulse.detuning_mu, omega, start, len);
    }
    I * acc
}

/// Closed-form displacements at the end of the pulse.
pub fn alpha_final(pulse: &PulseShape, modes: &ModeStructure) -> Result<TrajectorySet> {
    pulse.check_against(modes)?;
    let integrals = mode_integrals(pulse, modes);
    Ok(alphas_from_integrals(&integrals, pulse, modes))
}

pub(crate) fn alphas_from_integrals(integrals: &[Complex64], pulse: &PulseShape, modes: &ModeStructure) -> TrajectorySet {
    let ions = pulse.ion_indices();
    let alpha = ions.map(|i| {
        integrals
            .iter()
            .enumerate()
            .map(|(m, val)| val * modes.lamb_dicke[(i, m)])
            .collect()
    });
    TrajectorySet { alpha, sampled_paths: None }
}

/// Displacements on a uniform grid of `n_samples` times from 0 to τ_g inclusive.
pub fn alpha_path(pulse: &PulseShape, modes: &ModeStructure, n_samples: usize) -> Result<TrajectorySet> {
    pulse.check_against(modes)?;
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {n_samples}")));
    }
    let times: Vec<f64> = (0..n_samples)
        .map(|k| {
            if k == n_samples - 1 {
                pulse.gate_time
            } else {
                pulse.gate_time * k as f64 / (n_samples - 1) as f64
            }
        })
        .collect();
    let integrals = mode_integrals(pulse, modes);
    let mut set = alphas_from_integrals(&integrals, pulse, modes);
    let ions = pulse.ion_indices();
    let paths_per_mode: Vec<Vec<Complex64>> = modes
        .mode_freqs
        .iter()
        .enumerate()
        .map(|(m, &omega)| {
            times
                .iter()
                .enumerate()
                .map(|(k, &t)| if k == n_samples - 1 { integrals[m] } else { mode_integral_until(pulse, omega, t) })
                .collect()
        })
        .collect();
    let alpha = ions.map(|i| {
        paths_per_mode
            .iter()
            .enumerate()
            .map(|(m, path)| path.iter().map(|v| v * modes.lamb_dicke[(i, m)]).collect())
            .collect()
    });
    set.sampled_paths = Some(SampledPaths { times, alpha });
    Ok(set)
}

/// Per-mode value of `∫∫_{t<t'} f(t) f(t') sin[ω(t' - t)]` for `f = Ω sin(μt)`.
fn mode_double_integral(pulse: &PulseShape, omega: f64) -> f64 {
    let h = pulse.segment_duration();
    let mu = pulse.detuning_mu;
    let mut prefix = Complex64::new(0.0, 0.0);
    let mut total = 0.0;
    for (s, &amp) in pulse.segments.iter().enumerate() {
        let start = s as f64 * h;
        let seg = segment_sin_exp(mu, omega, start, h);
        total += amp * amp * segment_triangle(mu, omega, start, h);
        total += amp * (seg * prefix.conj()).im;
        prefix += amp * seg;
    }
    total
}

/// Closed-form entangling phase between the two target ions.
pub fn chi(pulse: &PulseShape, modes: &ModeStructure) -> Result<CouplingResult> {
    pulse.check_against(modes)?;
    let [a, b] = pulse.ion_indices();
    let per_mode_chi: Vec<f64> = modes
        .mode_freqs
        .iter()
        .enumerate()
        .map(|(m, &omega)| {
            let weight = 2.0 * modes.lamb_dicke[(a, m)] * modes.lamb_dicke[(b, m)];
            if weight == 0.0 {
                0.0
            } else {
                weight * mode_double_integral(pulse, omega)
            }
        })
        .collect();
    Ok(CouplingResult { chi: per_mode_chi.iter().sum(), per_mode_chi })
}

/// Symmetric matrix `Q` with `χ = Ωᵀ Q Ω` for amplitude vectors `Ω` of `n_segments`
/// equal segments.
pub fn chi_quadratic_form(
    mu: f64,
    gate_time: f64,
    n_segments: usize,
    modes: &ModeStructure,
    target_ions: (usize, usize),
) -> DMatrix<f64> {
    let (a, b) = (target_ions.0 - 1, target_ions.1 - 1);
    let h = gate_time / n_segments as f64;
    let mut q = DMatrix::zeros(n_segments, n_segments);
    for (m, &omega) in modes.mode_freqs.iter().enumerate() {
        let weight = modes.lamb_dicke[(a, m)] * modes.lamb_dicke[(b, m)];
        if weight == 0.0 {
            continue;
        }
        let segs: Vec<Complex64> = (0..n_segments).map(|s| segment_sin_exp(mu, omega, s as f64 * h, h)).collect();
        for s in 0..n_segments {
            q[(s, s)] += 2.0 * weight * segment_triangle(mu, omega, s as f64 * h, h);
            for r in 0..s {
                // Pair (earlier r, later s).
                let v = weight * (segs[s] * segs[r].conj()).im;
                q[(r, s)] += v;
                q[(s, r)] += v;
            }
        }
    }
    q
}

/// Residuals of the homogeneity relations `χ(kΩ) = k²χ(Ω)` and `α(kΩ) = kα(Ω)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityCheck {
    pub scale: f64,
    pub chi_residual: f64,
    pub alpha_residual: f64,
}

impl HomogeneityCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.chi_residual <= tolerance && self.alpha_residual <= tolerance
    }
}

/// Recomputes `α` and `χ` on the scaled pulse and reports relative residuals.
pub fn chi_is_quadratic_check(pulse: &PulseShape, modes: &ModeStructure, scale: f64) -> Result<HomogeneityCheck> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be non-negative, got {scale}")));
    }
    let base_alpha = alpha_final(pulse, modes)?;
    let base_chi = chi(pulse, modes)?;
    let scaled = pulse.scaled(scale);
    let alpha = alpha_final(&scaled, modes)?;
    let coupling = chi(&scaled, modes)?;

    let expected_chi = scale * scale * base_chi.chi;
    let chi_scale = (scale * scale * base_chi.per_mode_chi.iter().map(|c| c.abs()).sum::<f64>()).max(f64::MIN_POSITIVE);
    let chi_residual = if expected_chi == 0.0 && coupling.chi == 0.0 {
        0.0
    } else {
        (coupling.chi - expected_chi).abs() / chi_scale
    };

    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..2 {
        for (got, base) in alpha.alpha[k].iter().zip(&base_alpha.alpha[k]) {
            num = num.max((got - base * scale).norm());
            den = den.max((base * scale).norm());
        }
    }
    let alpha_residual = if num == 0.0 { 0.0 } else { num / den.max(f64::MIN_POSITIVE) };
    Ok(HomogeneityCheck { scale, chi_residual, alpha_residual })
}
