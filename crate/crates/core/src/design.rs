//! Segment amplitudes that close every mode trajectory and set `|χ| = π/4`.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::chain::{ModeStructure, TrapConfig};
use crate::constants::{angular_to_hz, hz_to_angular};
use crate::drive::{self, PulseShape, TrajectorySet};
use crate::error::{Error, Result};
use crate::fidelity::{self, ThermalSpec};

/// Detunings closer than this to a mode frequency are rejected by [`design_exact`], in Hz.
pub const DEGENERATE_GUARD_HZ: f64 = 10.0;

/// Below this the candidate pulse carries no usable entangling phase (per amplitude in
/// units of `1/τ_g`).
const ZERO_CHI: f64 = 1e-15;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DesignSpec {
    pub trap: TrapConfig,
    pub modes: ModeStructure,
    pub target_ions: (usize, usize),
    pub detuning_mu: f64,
    pub gate_time: f64,
    pub n_segments: usize,
    /// Per-mode weights on `|α_{i,m}|²`; defaults to `2n̄_m + 1`.
    pub mode_weights: Option<Vec<f64>>,
    pub thermal_nbar: Vec<f64>,
}

impl DesignSpec {
    pub fn new(
        trap: TrapConfig,
        modes: ModeStructure,
        target_ions: (usize, usize),
        detuning_mu: f64,
        gate_time: f64,
        n_segments: usize,
    ) -> Self {
        let n = modes.n_modes();
        DesignSpec {
            trap,
            modes,
            target_ions,
            detuning_mu,
            gate_time,
            n_segments,
            mode_weights: None,
            thermal_nbar: vec![0.0; n],
        }
    }

    pub fn with_detuning(&self, detuning_mu: f64) -> Self {
        DesignSpec { detuning_mu, ..self.clone() }
    }

    pub fn thermal(&self) -> ThermalSpec {
        ThermalSpec { nbar: self.thermal_nbar.clone() }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.mode_weights
            .clone()
            .unwrap_or_else(|| self.thermal_nbar.iter().map(|n| 2.0 * n + 1.0).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.modes.n_modes();
        if self.n_segments == 0 {
            return Err(Error::InvalidPulse("at least one segment is required".into()));
        }
        if !(self.gate_time > 0.0 && self.gate_time.is_finite()) {
            return Err(Error::InvalidPulse(format!("gate time must be positive, got {}", self.gate_time)));
        }
        if !self.detuning_mu.is_finite() {
            return Err(Error::InvalidPulse("detuning must be finite".into()));
        }
        let (a, b) = self.target_ions;
        if a == b || a == 0 || b == 0 || a > self.modes.n_ions() || b > self.modes.n_ions() {
            return Err(Error::InvalidPulse(format!("target ions ({a}, {b}) must be distinct and within 1..={}", self.modes.n_ions())));
        }
        self.thermal().validate(n)?;
        if let Some(w) = &self.mode_weights {
            if w.len() != n || w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidInput(format!("mode weights must be {n} positive numbers")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Weighted,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSolution {
    pub solver: Solver,
    pub pulse: PulseShape,
    pub chi: f64,
    pub chi_sign: f64,
    pub residual_alphas: TrajectorySet,
    pub predicted_fidelity: f64,
    /// Largest segment amplitude, rad/s.
    pub peak_rabi: f64,
    /// `σ_max / σ_min` of the closure constraint matrix.
    pub condition_number: f64,
    pub thermal_nbar: Vec<f64>,
}

impl GateSolution {
    pub fn thermal(&self) -> ThermalSpec {
        ThermalSpec { nbar: self.thermal_nbar.clone() }
    }

    pub fn max_residual(&self) -> f64 {
        self.residual_alphas.max_abs()
    }
}

/// Rows `Re I_m`, `Im I_m` of the per-segment mode integrals, in units of `τ_g`.
pub fn constraint_matrix(modes: &ModeStructure, mu: f64, gate_time: f64, n_segments: usize) -> DMatrix<f64> {
    let n = modes.n_modes();
    let mut c = DMatrix::zeros(2 * n, n_segments);
    for (m, &omega) in modes.mode_freqs.iter().enumerate() {
        let row = drive::segment_mode_integrals(mu, gate_time, n_segments, omega);
        for (s, v) in row.iter().enumerate() {
            c[(2 * m, s)] = v.re / gate_time;
            c[(2 * m + 1, s)] = v.im / gate_time;
        }
    }
    c
}

fn singular_values(c: &DMatrix<f64>) -> Vec<f64> {
    c.clone().svd(false, false).singular_values.iter().copied().collect()
}

fn condition_number(c: &DMatrix<f64>) -> f64 {
    let sv = singular_values(c);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 { f64::INFINITY } else { max / min }
}

/// Orthonormal basis (columns) of the null space of `c`.
fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let s = c.ncols();
    let mut padded = DMatrix::zeros(s.max(c.nrows()), s);
    padded.view_mut((0, 0), (c.nrows(), s)).copy_from(c);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sigma_max = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= RANK_TOLERANCE * sigma_max)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(s, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// `Q` scaled so that amplitudes are measured in units of `1/τ_g`.
fn unit_chi_form(modes: &ModeStructure, mu: f64, gate_time: f64, n_segments: usize, target: (usize, usize)) -> DMatrix<f64> {
    drive::chi_quadratic_form(mu, gate_time, n_segments, modes, target) / (gate_time * gate_time)
}

fn sign_normalised(mut v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

struct PeakAfterScaling<'a> {
    basis: &'a DMatrix<f64>,
    q: &'a DMatrix<f64>,
}

impl PeakAfterScaling<'_> {
    fn value(&self, c: &[f64]) -> f64 {
        let c = DVector::from_column_slice(c);
        let v = self.basis * &c;
        let chi = (c.transpose() * self.q * &c)[(0, 0)].abs();
        let peak = v.amax();
        if chi <= 0.0 { f64::MAX } else { peak * peak / chi }
    }
}

impl CostFunction for PeakAfterScaling<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, c: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(c))
    }
}

/// Direction within the span of `basis` (orthonormal columns) whose pulse has the smallest
/// peak amplitude once scaled to `|χ| = π/4`.
fn lowest_peak_direction(basis: &DMatrix<f64>, q_full: &DMatrix<f64>) -> DVector<f64> {
    let k = basis.ncols();
    let q = basis.transpose() * q_full * basis;
    let eig = q.clone().symmetric_eigen();
    if k == 1 {
        return sign_normalised(basis.column(0).into_owned());
    }
    let cost = PeakAfterScaling { basis, q: &q };
    // Deterministic starts: each eigenvector of the restricted χ form.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for &j in &order {
        let start: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let mut simplex = vec![start.clone()];
        for i in 0..k {
            let mut p = start.clone();
            p[i] += 0.25;
            simplex.push(p);
        }
        let found = NelderMead::new(simplex)
            .with_sd_tolerance(1e-14)
            .ok()
            .and_then(|solver| {
                Executor::new(PeakAfterScaling { basis, q: &q }, solver)
                    .configure(|state| state.max_iters(4000))
                    .run()
                    .ok()
            })
            .and_then(|res| res.state().get_best_param().cloned())
            .unwrap_or(start);
        let value = cost.value(&found);
        if best.as_ref().is_none_or(|(b, _)| value < b * (1.0 - 1e-12)) {
            best = Some((value, found));
        }
    }
    let c = DVector::from_vec(best.expect("at least one start").1);
    let v = basis * c;
    let norm = v.norm();
    sign_normalised(v / norm)
}

fn check_guard(spec: &DesignSpec) -> Result<()> {
    for (m, &omega) in spec.modes.mode_freqs.iter().enumerate() {
        let separation_hz = angular_to_hz((spec.detuning_mu - omega).abs());
        if separation_hz < DEGENERATE_GUARD_HZ {
            return Err(Error::DegenerateDetuning { mode: m + 1, separation_hz, guard_hz: DEGENERATE_GUARD_HZ });
        }
    }
    Ok(())
}

/// Scales the unit direction `v` (amplitudes in `1/τ_g`) to `|χ| = π/4` and evaluates it.
fn finish(spec: &DesignSpec, solver: Solver, v: &DVector<f64>, q_unit: &DMatrix<f64>, condition: f64) -> Result<GateSolution> {
    let chi_unit = (v.transpose() * q_unit * v)[(0, 0)];
    if !(chi_unit.abs() >= ZERO_CHI) {
        return Err(Error::ZeroChi { chi: chi_unit });
    }
    let scale = (FRAC_PI_4 / chi_unit.abs()).sqrt() / spec.gate_time;
    let segments: Vec<f64> = v.iter().map(|x| x * scale).collect();
    let pulse = PulseShape::new(spec.detuning_mu, spec.gate_time, segments, spec.target_ions)?;
    evaluate(spec, solver, pulse, condition)
}

fn evaluate(spec: &DesignSpec, solver: Solver, pulse: PulseShape, condition: f64) -> Result<GateSolution> {
    let residual_alphas = drive::alpha_final(&pulse, &spec.modes)?;
    let chi = drive::chi(&pulse, &spec.modes)?.chi;
    let chi_sign = fidelity::chi_sign(chi);
    let thermal = spec.thermal();
    let predicted_fidelity = fidelity::bell_fidelity_for_target(&residual_alphas, chi, chi_sign, &thermal);
    Ok(GateSolution {
        solver,
        peak_rabi: pulse.peak_amplitude(),
        pulse,
        chi,
        chi_sign,
        residual_alphas,
        predicted_fidelity,
        condition_number: condition,
        thermal_nbar: spec.thermal_nbar.clone(),
    })
}

/// Null-space solution with `S ≥ 2N + 1` segments: every trajectory closes exactly.
pub fn design_exact(spec: &DesignSpec) -> Result<GateSolution> {
    spec.validate()?;
    let n = spec.modes.n_modes();
    if spec.n_segments < 2 * n + 1 {
        return Err(Error::TooFewSegments { segments: spec.n_segments, modes: n, required: 2 * n + 1 });
    }
    check_guard(spec)?;
    let c = constraint_matrix(&spec.modes, spec.detuning_mu, spec.gate_time, spec.n_segments);
    let basis = null_space(&c);
    if basis.ncols() == 0 {
        return Err(Error::NullSpaceEmpty);
    }
    let q = unit_chi_form(&spec.modes, spec.detuning_mu, spec.gate_time, spec.n_segments, spec.target_ions);
    let v = lowest_peak_direction(&basis, &q);
    finish(spec, Solver::Exact, &v, &q, condition_number(&c))
}

/// `P = Σ_m w_m (η_{a,m}² + η_{b,m}²)(Re_mᵀRe_m + Im_mᵀIm_m)`, so `ΩᵀPΩ = Σ_{i,m} w_m |α_{i,m}|²`.
pub fn weighted_cost_matrix(spec: &DesignSpec) -> DMatrix<f64> {
    let c = constraint_matrix(&spec.modes, spec.detuning_mu, spec.gate_time, spec.n_segments);
    let (a, b) = (spec.target_ions.0 - 1, spec.target_ions.1 - 1);
    let weights = spec.weights();
    let mut p = DMatrix::zeros(spec.n_segments, spec.n_segments);
    for (m, w) in weights.iter().enumerate() {
        let eta2 = spec.modes.lamb_dicke[(a, m)].powi(2) + spec.modes.lamb_dicke[(b, m)].powi(2);
        for r in [2 * m, 2 * m + 1] {
            let row = c.row(r);
            p += row.transpose() * row * (w * eta2);
        }
    }
    p
}

/// Weighted least squares: the lowest eigenvector of [`weighted_cost_matrix`].
pub fn design_weighted(spec: &DesignSpec) -> Result<GateSolution> {
    spec.validate()?;
    let p = weighted_cost_matrix(spec);
    let eig = p.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    // Degenerate lowest eigenspace: pick within it as the exact solver does.
    let cols: Vec<DVector<f64>> = (0..spec.n_segments)
        .filter(|&k| eig.eigenvalues[k] <= min + 1e-12 * max)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let basis = DMatrix::from_columns(&cols);
    let q = unit_chi_form(&spec.modes, spec.detuning_mu, spec.gate_time, spec.n_segments, spec.target_ions);
    let v = lowest_peak_direction(&basis, &q);
    let c = constraint_matrix(&spec.modes, spec.detuning_mu, spec.gate_time, spec.n_segments);
    finish(spec, Solver::Weighted, &v, &q, condition_number(&c))
}

/// Constant amplitude over the whole gate, scaled to `|χ| = π/4`.
pub fn design_constant(spec: &DesignSpec) -> Result<GateSolution> {
    let spec = DesignSpec { n_segments: 1, ..spec.clone() };
    spec.validate()?;
    let q = unit_chi_form(&spec.modes, spec.detuning_mu, spec.gate_time, 1, spec.target_ions);
    let c = constraint_matrix(&spec.modes, spec.detuning_mu, spec.gate_time, 1);
    finish(&spec, Solver::Constant, &DVector::from_element(1, 1.0), &q, condition_number(&c))
}

pub fn design(spec: &DesignSpec, solver: Solver) -> Result<GateSolution> {
    match solver {
        Solver::Exact => design_exact(spec),
        Solver::Weighted => design_weighted(spec),
        Solver::Constant => design_constant(spec),
    }
}

// ---------------------------------------------------------------------------------------
// Scans

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessPoint {
    pub offset: f64,
    pub fidelity: f64,
    pub chi: f64,
    pub max_residual: f64,
}

fn evaluate_fixed(solution: &GateSolution, pulse: &PulseShape, modes: &ModeStructure, offset: f64) -> Result<RobustnessPoint> {
    let alphas = drive::alpha_final(pulse, modes)?;
    let chi = drive::chi(pulse, modes)?.chi;
    let fidelity = fidelity::bell_fidelity_for_target(&alphas, chi, solution.chi_sign, &solution.thermal());
    Ok(RobustnessPoint { offset, fidelity, chi, max_residual: alphas.max_abs() })
}

/// Fidelity with the amplitudes held fixed and `μ` shifted by each offset (rad/s).
pub fn robustness_scan(solution: &GateSolution, modes: &ModeStructure, offsets: &[f64]) -> Result<Vec<RobustnessPoint>> {
    offsets
        .par_iter()
        .map(|&offset| {
            let pulse = solution.pulse.with_detuning(solution.pulse.detuning_mu + offset);
            evaluate_fixed(solution, &pulse, modes, offset)
        })
        .collect()
}

/// As [`robustness_scan`], shifting every mode frequency by a common offset instead.
pub fn mode_offset_scan(solution: &GateSolution, modes: &ModeStructure, offsets: &[f64]) -> Result<Vec<RobustnessPoint>> {
    offsets
        .par_iter()
        .map(|&offset| evaluate_fixed(solution, &solution.pulse, &modes.with_frequency_offset(offset), offset))
        .collect()
}

/// One point of a detuning scan; `solution` is `None` where the solver refused the point.
#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub detuning_mu: f64,
    pub outcome: std::result::Result<GateSolution, String>,
}

impl ScanPoint {
    pub fn fidelity(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|s| s.predicted_fidelity)
    }
}

/// Designs a gate at every detuning of the grid (rad/s), in parallel, keeping grid order.
pub fn detuning_scan(spec: &DesignSpec, solver: Solver, detunings: &[f64]) -> Vec<ScanPoint> {
    detunings
        .par_iter()
        .map(|&mu| ScanPoint { detuning_mu: mu, outcome: design(&spec.with_detuning(mu), solver).map_err(|e| e.to_string()) })
        .collect()
}

/// Uniform grid of `points` detunings (rad/s) from `start_hz` to `stop_hz` inclusive,
/// omitting points inside the degenerate guard of any mode.
pub fn detuning_grid(modes: &ModeStructure, start_hz: f64, stop_hz: f64, points: usize) -> Vec<f64> {
    let step = if points > 1 { (stop_hz - start_hz) / (points - 1) as f64 } else { 0.0 };
    (0..points)
        .map(|k| start_hz + step * k as f64)
        .filter(|&hz| modes.mode_freqs.iter().all(|&w| (hz - angular_to_hz(w)).abs() >= DEGENERATE_GUARD_HZ))
        .map(hz_to_angular)
        .collect()
}

/// Residual mode integrals of a pulse, for diagnostics.
pub fn residual_mode_integrals(pulse: &PulseShape, modes: &ModeStructure) -> Vec<Complex64> {
    drive::mode_integrals(pulse, modes)
}
