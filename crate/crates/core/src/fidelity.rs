//! Gate fidelity from the branch picture of the spin-dependent displacement.
//!
//! In the σ_x⊗σ_x eigenbasis `|s_a s_b⟩` (`s = ±1`) the gate acts on the motion of branch
//! `s` as the displacement `D(β_{s,m})` with `β_{s,m} = s_a α_{a,m} + s_b α_{b,m}` and adds
//! the phase `e^{iχ s_a s_b}`. Tracing out thermal modes gives
//!
//! ```text
//! ρ_{ss'} = ρ⁰_{ss'} e^{iχ(p_s - p_s')} Π_m e^{i Im(β_{s'}* β_s)} exp(-|β_s - β_{s'}|² (2n̄_m+1)/2)
//! ```
//!
//! with `p_s = s_a s_b`. [`bell_fidelity_analytic`] evaluates this in closed form;
//! [`evolve_exact`] applies truncated displacement matrices to an explicit state.
//!
//! Register layout: the two target spins come first (qubit-major, target `a` most
//! significant), followed by the Fock indices of modes `0..N` in ascending order, mode 0
//! slowest.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::ModeStructure;
use crate::drive::{self, PulseShape, TrajectorySet};
use crate::error::{Error, Result};
use crate::fock::{self, DisplacementBasis};
use crate::spin;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Leakage above which a truncated simulation is reported as unconverged.
pub const LEAKAGE_LIMIT: f64 = 1e-6;
/// Thermal weight allowed above the Fock cutoff.
pub const THERMAL_TAIL: f64 = 1e-8;
/// Default cap on the simulated Hilbert-space dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    pub nbar: Vec<f64>,
}

impl ThermalSpec {
    pub fn ground(n_modes: usize) -> Self {
        ThermalSpec { nbar: vec![0.0; n_modes] }
    }

    pub fn uniform(n_modes: usize, nbar: f64) -> Self {
        ThermalSpec { nbar: vec![nbar; n_modes] }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.nbar.len() != n_modes {
            return Err(Error::InvalidInput(format!(
                "thermal occupation has {} entries for {} modes",
                self.nbar.len(),
                n_modes
            )));
        }
        if let Some(bad) = self.nbar.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
            return Err(Error::InvalidInput(format!("mean occupation must be finite and non-negative, got {bad}")));
        }
        Ok(())
    }

    /// Number of Fock levels carrying all but [`THERMAL_TAIL`] of mode `m`'s weight.
    pub fn levels(&self, m: usize) -> usize {
        fock::thermal_cutoff(self.nbar[m], THERMAL_TAIL)
    }

    /// Renormalised Bose-Einstein weights over [`ThermalSpec::levels`].
    pub fn weights(&self, m: usize) -> Vec<f64> {
        let w = fock::thermal_weights(self.nbar[m], self.levels(m));
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }
}

// ---------------------------------------------------------------------------------------
// Branch bookkeeping

/// Signs `(s_a, s_b)` of σ_x branch `b`, with bit value 0 meaning `|+⟩`.
fn branch_signs(b: usize) -> (f64, f64) {
    let sign = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
    (sign(b >> 1), sign(b & 1))
}

fn branch_parity(b: usize) -> f64 {
    let (sa, sb) = branch_signs(b);
    sa * sb
}

fn branch_displacements(alphas: &TrajectorySet) -> Vec<[Complex64; 4]> {
    (0..alphas.n_modes())
        .map(|m| {
            std::array::from_fn(|b| {
                let (sa, sb) = branch_signs(b);
                alphas.alpha[0][m] * sa + alphas.alpha[1][m] * sb
            })
        })
        .collect()
}

/// Two-qubit Hadamard `H⊗H`, its own inverse.
fn hadamard2() -> DMatrix<Complex64> {
    let h = spin::to_dmatrix(&spin::hadamard());
    h.kronecker(&h)
}

fn to_x_basis(rho_z: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let h = hadamard2();
    &h * rho_z * &h
}

fn to_z_basis(rho_x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    to_x_basis(rho_x)
}

/// Bell target `(|00⟩ + i·sign|11⟩)/√2`, with `sign = +1` for `χ ≥ 0`.
pub fn bell_target(chi_sign: f64) -> DVector<Complex64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let g = if chi_sign < 0.0 { -1.0 } else { 1.0 };
    DVector::from_vec(vec![Complex64::new(r, 0.0), ZERO, ZERO, Complex64::new(0.0, g * r)])
}

pub fn chi_sign(chi: f64) -> f64 {
    if chi < 0.0 { -1.0 } else { 1.0 }
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn state_fidelity(rho: &DMatrix<Complex64>, target: &DVector<Complex64>) -> f64 {
    (target.adjoint() * rho * target)[(0, 0)].re
}

// ---------------------------------------------------------------------------------------
// Analytic result

/// Thermal trace `Tr[D(β') ρ_th D(β)† ]`-type overlap between two branches of one mode.
fn branch_overlap(beta: Complex64, beta_prime: Complex64, nbar: f64) -> Complex64 {
    let phase = (beta_prime.conj() * beta).im;
    Complex64::from_polar((-(beta - beta_prime).norm_sqr() * (2.0 * nbar + 1.0) / 2.0).exp(), phase)
}

/// Multiplier `K_{ss'}` (σ_x basis) taking the initial two-spin density matrix to the
/// reduced density matrix after the gate.
pub fn branch_kernel(alphas: &TrajectorySet, chi: f64, thermal: &ThermalSpec) -> DMatrix<Complex64> {
    let betas = branch_displacements(alphas);
    DMatrix::from_fn(4, 4, |s, t| {
        let mut k = Complex64::from_polar(1.0, chi * (branch_parity(s) - branch_parity(t)));
        for (m, beta) in betas.iter().enumerate() {
            k *= branch_overlap(beta[s], beta[t], thermal.nbar[m]);
        }
        k
    })
}

/// Reduced two-spin density matrix (σ_z basis) after the gate, starting from `|00⟩`.
pub fn reduced_spin_after_gate(alphas: &TrajectorySet, chi: f64, thermal: &ThermalSpec) -> DMatrix<Complex64> {
    let kernel = branch_kernel(alphas, chi, thermal);
    // |00⟩ has equal weight 1/2 on every σ_x branch.
    to_z_basis(&kernel.map(|k| k * 0.25))
}

/// Fidelity of the traced-out spin state with `(|00⟩ + i·sign(χ)|11⟩)/√2` after a gate
/// with residual displacements `alphas` and phase `chi`, for thermal modes.
pub fn bell_fidelity_analytic(alphas: &TrajectorySet, chi: f64, thermal: &ThermalSpec) -> f64 {
    bell_fidelity_for_target(alphas, chi, chi_sign(chi), thermal)
}

/// As [`bell_fidelity_analytic`] against a fixed target `(|00⟩ + i·target_sign|11⟩)/√2`.
pub fn bell_fidelity_for_target(alphas: &TrajectorySet, chi: f64, target_sign: f64, thermal: &ThermalSpec) -> f64 {
    let betas = branch_displacements(alphas);
    let g = chi_sign(target_sign);
    let offset = chi - g * std::f64::consts::FRAC_PI_4;
    let mut total = ZERO;
    for s in 0..4 {
        for t in 0..4 {
            let mut term = Complex64::from_polar(1.0, offset * (branch_parity(s) - branch_parity(t)));
            for (m, beta) in betas.iter().enumerate() {
                term *= branch_overlap(beta[s], beta[t], thermal.nbar[m]);
            }
            total += term;
        }
    }
    (total.re / 16.0).clamp(0.0, 1.0)
}

/// Leading-order infidelity `Σ_{i,m} (2n̄_m+1)|α_{i,m}|²` for `χ = ±π/4`.
pub fn leading_order_infidelity(alphas: &TrajectorySet, thermal: &ThermalSpec) -> f64 {
    (0..alphas.n_modes())
        .map(|m| (2.0 * thermal.nbar[m] + 1.0) * (alphas.alpha[0][m].norm_sqr() + alphas.alpha[1][m].norm_sqr()))
        .sum()
}

// ---------------------------------------------------------------------------------------
// Explicit states

/// Joint state of the two target spins and the truncated motional modes.
#[derive(Clone, Debug)]
pub enum Representation {
    /// State vector of length `4 Π d_m`.
    Pure(DVector<Complex64>),
    /// Weighted pure states `Σ w_k |ψ_k⟩⟨ψ_k|`.
    Mixture(Vec<(f64, DVector<Complex64>)>),
    /// Density operator `Σ_{ss'} r_{ss'} |s⟩⟨s'| ⊗ (⊗_m M^{(m)}_{ss'})` in the σ_x spin basis:
    /// `spin[(s,s')] = r_{ss'}` and `modes[m][4s+s'] = M^{(m)}_{ss'}`.
    Branched { spin: DMatrix<Complex64>, modes: Vec<Vec<DMatrix<Complex64>>> },
}

#[derive(Clone, Debug)]
pub struct QuantumState {
    pub representation: Representation,
    /// Fock dimension per mode.
    pub cutoffs: Vec<usize>,
    /// Largest population found in the top two Fock levels of any mode.
    pub leakage: f64,
}

impl QuantumState {
    /// Spin product state `|q_a q_b⟩ ⊗ |0…0⟩`.
    pub fn spin_basis_ground(bits: (usize, usize), cutoffs: Vec<usize>) -> Self {
        let mode_dim: usize = cutoffs.iter().product();
        let mut v = DVector::zeros(4 * mode_dim);
        v[(2 * bits.0 + bits.1) * mode_dim] = ONE;
        QuantumState { representation: Representation::Pure(v), cutoffs, leakage: 0.0 }
    }

    /// `|00⟩` with every mode thermal, as an explicit Fock-diagonal mixture.
    pub fn thermal_mixture(thermal: &ThermalSpec, cutoffs: Vec<usize>) -> Result<Self> {
        let levels: Vec<usize> = (0..cutoffs.len()).map(|m| thermal.levels(m).min(cutoffs[m])).collect();
        let weights: Vec<Vec<f64>> = (0..cutoffs.len()).map(|m| thermal.weights(m)).collect();
        let mode_dim: usize = cutoffs.iter().product();
        let total: usize = levels.iter().product();
        let mut members = Vec::with_capacity(total);
        let mut fock = vec![0usize; cutoffs.len()];
        for _ in 0..total {
            let w: f64 = fock.iter().enumerate().map(|(m, &n)| weights[m][n]).product();
            let index = fock.iter().zip(&cutoffs).fold(0, |acc, (&n, &d)| acc * d + n);
            let mut v = DVector::zeros(4 * mode_dim);
            v[index] = ONE;
            members.push((w, v));
            for m in (0..fock.len()).rev() {
                fock[m] += 1;
                if fock[m] < levels[m] {
                    break;
                }
                fock[m] = 0;
            }
        }
        let norm: f64 = members.iter().map(|(w, _)| w).sum();
        members.iter_mut().for_each(|(w, _)| *w /= norm);
        Ok(QuantumState { representation: Representation::Mixture(members), cutoffs, leakage: 0.0 })
    }

    /// `|00⟩⟨00| ⊗ Π_m ρ_th(n̄_m)` in branched form.
    pub fn thermal_branched(thermal: &ThermalSpec, cutoffs: Vec<usize>) -> Self {
        let spin = DMatrix::from_element(4, 4, Complex64::new(0.25, 0.0));
        let modes = cutoffs
            .iter()
            .enumerate()
            .map(|(m, &d)| {
                let mut w = thermal.weights(m);
                w.resize(d, 0.0);
                let norm: f64 = w.iter().sum();
                let rho = DMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(w[i] / norm, 0.0) } else { ZERO });
                vec![rho; 16]
            })
            .collect();
        QuantumState { representation: Representation::Branched { spin, modes }, cutoffs, leakage: 0.0 }
    }

    pub fn dimension(&self) -> usize {
        4 * self.cutoffs.iter().product::<usize>()
    }

    pub fn is_converged(&self) -> bool {
        self.leakage < LEAKAGE_LIMIT
    }

    pub fn trace(&self) -> f64 {
        match &self.representation {
            Representation::Pure(v) => v.norm_squared(),
            Representation::Mixture(members) => members.iter().map(|(w, v)| w * v.norm_squared()).sum(),
            Representation::Branched { .. } => self.reduced_spin().trace().re,
        }
    }

    /// Two-spin density matrix (σ_z basis) with all modes traced out.
    pub fn reduced_spin(&self) -> DMatrix<Complex64> {
        let mode_dim: usize = self.cutoffs.iter().product();
        let partial = |v: &DVector<Complex64>| {
            DMatrix::from_fn(4, 4, |i, j| {
                let (x, y) = (v.rows(i * mode_dim, mode_dim), v.rows(j * mode_dim, mode_dim));
                x.dotc(&y).conj()
            })
        };
        match &self.representation {
            Representation::Pure(v) => partial(v),
            Representation::Mixture(members) => {
                members.iter().fold(DMatrix::zeros(4, 4), |acc, (w, v)| acc + partial(v) * Complex64::new(*w, 0.0))
            }
            Representation::Branched { spin, modes } => {
                let rho_x = DMatrix::from_fn(4, 4, |s, t| {
                    modes.iter().fold(spin[(s, t)], |acc, blocks| acc * blocks[4 * s + t].trace())
                });
                to_z_basis(&rho_x)
            }
        }
    }

    fn measure_leakage(&mut self) {
        let cutoffs = self.cutoffs.clone();
        let mode_dim: usize = cutoffs.iter().product();
        let top_population = |v: &DVector<Complex64>, m: usize| -> f64 {
            let d = cutoffs[m];
            let inner: usize = cutoffs[m + 1..].iter().product();
            v.iter()
                .enumerate()
                .filter(|(k, _)| {
                    let n = ((k % mode_dim) / inner) % d;
                    d >= 2 && n + 2 >= d
                })
                .map(|(_, a)| a.norm_sqr())
                .sum()
        };
        self.leakage = match &self.representation {
            Representation::Pure(v) => (0..cutoffs.len()).map(|m| top_population(v, m)).fold(0.0, f64::max),
            Representation::Mixture(members) => (0..cutoffs.len())
                .map(|m| members.iter().map(|(w, v)| w * top_population(v, m)).sum::<f64>())
                .fold(0.0, f64::max),
            Representation::Branched { spin, modes } => modes
                .iter()
                .map(|blocks| {
                    (0..4)
                        .map(|s| {
                            let d = blocks[5 * s].nrows();
                            let top: f64 = (d.saturating_sub(2)..d).map(|n| blocks[5 * s][(n, n)].re).sum();
                            spin[(s, s)].re * top
                        })
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
        };
    }
}

/// Multiplies the slice `block` (all modes of one spin branch) by `op` along mode `m`.
fn apply_on_mode(block: &mut [Complex64], cutoffs: &[usize], m: usize, op: &DMatrix<Complex64>) {
    let d = cutoffs[m];
    let inner: usize = cutoffs[m + 1..].iter().product();
    let outer = block.len() / (d * inner);
    let mut column = vec![ZERO; d];
    for o in 0..outer {
        for k in 0..inner {
            let base = o * d * inner + k;
            for (n, c) in column.iter_mut().enumerate() {
                *c = block[base + n * inner];
            }
            for i in 0..d {
                let mut acc = ZERO;
                for (j, c) in column.iter().enumerate() {
                    acc += op[(i, j)] * c;
                }
                block[base + i * inner] = acc;
            }
        }
    }
}

fn apply_branches_pure(
    v: &DVector<Complex64>,
    cutoffs: &[usize],
    displacements: &[[DMatrix<Complex64>; 4]],
    chi: f64,
) -> DVector<Complex64> {
    let mode_dim: usize = cutoffs.iter().product();
    let h = hadamard2();
    let mix = |src: &DVector<Complex64>| {
        let mut out = DVector::zeros(src.len());
        for i in 0..4 {
            for j in 0..4 {
                if h[(i, j)] != ZERO {
                    let hij = h[(i, j)];
                    for k in 0..mode_dim {
                        out[i * mode_dim + k] += hij * src[j * mode_dim + k];
                    }
                }
            }
        }
        out
    };
    let mut x = mix(v);
    for b in 0..4 {
        let block = &mut x.as_mut_slice()[b * mode_dim..(b + 1) * mode_dim];
        for (m, ops) in displacements.iter().enumerate() {
            apply_on_mode(block, cutoffs, m, &ops[b]);
        }
        let phase = Complex64::from_polar(1.0, chi * branch_parity(b));
        block.iter_mut().for_each(|a| *a *= phase);
    }
    mix(&x)
}

/// Applies the gate `exp[Σ_i φ̂_i σ_x^{(i)} + iχ σ_x^{(a)}σ_x^{(b)}]` with prescribed final
/// displacements and phase.
pub fn evolve_with(alphas: &TrajectorySet, chi: f64, initial: &QuantumState, dimension_cap: usize) -> Result<QuantumState> {
    let n_modes = initial.cutoffs.len();
    if alphas.n_modes() != n_modes {
        return Err(Error::InvalidInput(format!(
            "state has {n_modes} modes but the trajectories have {}",
            alphas.n_modes()
        )));
    }
    let dimension = match &initial.representation {
        Representation::Branched { .. } => initial.cutoffs.iter().map(|d| 16 * d * d).sum(),
        _ => initial.dimension(),
    };
    if dimension > dimension_cap {
        return Err(Error::DimensionOverflow { dimension, cap: dimension_cap });
    }
    let betas = branch_displacements(alphas);
    let displacements: Vec<[DMatrix<Complex64>; 4]> = initial
        .cutoffs
        .iter()
        .zip(&betas)
        .map(|(&d, beta)| {
            let basis = DisplacementBasis::new(d);
            std::array::from_fn(|b| basis.displacement(beta[b]))
        })
        .collect();
    let representation = match &initial.representation {
        Representation::Pure(v) => Representation::Pure(apply_branches_pure(v, &initial.cutoffs, &displacements, chi)),
        Representation::Mixture(members) => Representation::Mixture(
            members
                .iter()
                .map(|(w, v)| (*w, apply_branches_pure(v, &initial.cutoffs, &displacements, chi)))
                .collect(),
        ),
        Representation::Branched { spin, modes } => {
            let spin = DMatrix::from_fn(4, 4, |s, t| {
                spin[(s, t)] * Complex64::from_polar(1.0, chi * (branch_parity(s) - branch_parity(t)))
            });
            let modes = modes
                .iter()
                .zip(&displacements)
                .map(|(blocks, ops)| {
                    (0..16).map(|k| &ops[k / 4] * &blocks[k] * ops[k % 4].adjoint()).collect()
                })
                .collect();
            Representation::Branched { spin, modes }
        }
    };
    let mut out = QuantumState { representation, cutoffs: initial.cutoffs.clone(), leakage: 0.0 };
    out.measure_leakage();
    Ok(out)
}

/// Exact truncated-space evolution under `pulse`, with `α` and `χ` from the closed forms.
pub fn evolve_exact(pulse: &PulseShape, modes: &ModeStructure, initial: &QuantumState) -> Result<QuantumState> {
    evolve_exact_capped(pulse, modes, initial, DEFAULT_DIMENSION_CAP)
}

pub fn evolve_exact_capped(
    pulse: &PulseShape,
    modes: &ModeStructure,
    initial: &QuantumState,
    dimension_cap: usize,
) -> Result<QuantumState> {
    let alphas = drive::alpha_final(pulse, modes)?;
    let chi = drive::chi(pulse, modes)?.chi;
    evolve_with(&alphas, chi, initial, dimension_cap)
}

/// Result of a converged truncated simulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactFidelity {
    pub fidelity: f64,
    pub cutoffs: Vec<usize>,
    pub leakage: f64,
    pub converged: bool,
}

/// Bell fidelity from the branched density-operator simulation, enlarging the Fock
/// cutoffs until the leakage falls below [`LEAKAGE_LIMIT`] or the cap is reached.
pub fn bell_fidelity_exact(alphas: &TrajectorySet, chi: f64, thermal: &ThermalSpec) -> Result<ExactFidelity> {
    thermal.validate(alphas.n_modes())?;
    let betas = branch_displacements(alphas);
    let mut cutoffs: Vec<usize> = betas
        .iter()
        .enumerate()
        .map(|(m, beta)| {
            let reach = beta.iter().map(|b| b.norm()).fold(0.0, f64::max);
            fock::suggested_dimension(thermal.levels(m), reach)
        })
        .collect();
    loop {
        let initial = QuantumState::thermal_branched(thermal, cutoffs.clone());
        let out = evolve_with(alphas, chi, &initial, DEFAULT_DIMENSION_CAP)?;
        let rho = out.reduced_spin();
        let fidelity = state_fidelity(&rho, &bell_target(chi_sign(chi)));
        if out.is_converged() || cutoffs.iter().any(|&d| 2 * d * 2 * d * 16 > DEFAULT_DIMENSION_CAP) {
            return Ok(ExactFidelity { fidelity, converged: out.is_converged(), leakage: out.leakage, cutoffs });
        }
        cutoffs.iter_mut().for_each(|d| *d *= 2);
    }
}

// ---------------------------------------------------------------------------------------
// Parity analysis

/// `R(π/2, φ)` analysis rotations on `analyzed` qubits (0-based) followed by the parity
/// `⟨Π σ_z⟩`, for each phase of the grid.
pub fn parity_scan_density(rho: &DMatrix<Complex64>, analyzed: &[usize], phi_grid: &[f64]) -> Vec<f64> {
    parity_scan_with_phases(rho, &analyzed.iter().map(|&q| (q, 1.0)).collect::<Vec<_>>(), phi_grid)
}

/// As [`parity_scan_density`], with qubit `q` rotated by `R(π/2, k_q φ)`.
pub fn parity_scan_with_phases(rho: &DMatrix<Complex64>, analyzed: &[(usize, f64)], phi_grid: &[f64]) -> Vec<f64> {
    let n_qubits = rho.nrows().trailing_zeros() as usize;
    let qubits: Vec<usize> = analyzed.iter().map(|(q, _)| *q).collect();
    phi_grid
        .iter()
        .map(|&phi| {
            let mut r = rho.clone();
            for &(q, k) in analyzed {
                spin::conjugate_1q(&mut r, n_qubits, q, &spin::rotation(std::f64::consts::FRAC_PI_2, k * phi));
            }
            spin::parity_from_probabilities(r.diagonal().iter().map(|z| z.re), n_qubits, &qubits)
        })
        .collect()
}

/// Parity scan of the target spins of a joint state (`analyzed` are 0-based, ⊂ {0, 1}).
pub fn parity_scan(state: &QuantumState, analyzed: &[usize], phi_grid: &[f64]) -> Result<Vec<f64>> {
    if analyzed.is_empty() || analyzed.iter().any(|&q| q > 1) {
        return Err(Error::InvalidInput(format!("analyzed qubits {analyzed:?} must be a non-empty subset of {{0, 1}}")));
    }
    Ok(parity_scan_density(&state.reduced_spin(), analyzed, phi_grid))
}

/// `n` equally spaced phases covering `[0, 2π)`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * std::f64::consts::PI * k as f64 / n as f64).collect()
}

/// Dominant harmonic of a parity curve sampled on [`phase_grid`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityFit {
    /// Harmonic number `k`; the period is `2π/k`. Zero for a flat curve.
    pub harmonic: usize,
    pub period: Option<f64>,
    /// Peak-to-peak amplitude divided by two.
    pub contrast: f64,
    /// `(2/M) Σ_j P_j e^{-ikφ_j}` for the dominant harmonic.
    pub coefficient: Complex64,
}

/// Amplitude below which a parity curve counts as flat.
const FLAT_CONTRAST: f64 = 1e-9;

/// Fits the dominant non-constant Fourier component, preferring the lower harmonic when two
/// are equally strong.
pub fn fit_parity(values: &[f64]) -> ParityFit {
    let n = values.len();
    let phis = phase_grid(n);
    let coefficient = |k: usize| -> Complex64 {
        values
            .iter()
            .zip(&phis)
            .map(|(v, phi)| Complex64::from_polar(*v, -(k as f64) * phi))
            .sum::<Complex64>()
            * (2.0 / n as f64)
    };
    let mut best = ParityFit { harmonic: 0, period: None, contrast: 0.0, coefficient: ZERO };
    for k in 1..n.div_ceil(2) {
        let c = coefficient(k);
        if c.norm() > best.contrast + FLAT_CONTRAST {
            best = ParityFit { harmonic: k, period: None, contrast: c.norm(), coefficient: c };
        }
    }
    if best.contrast < FLAT_CONTRAST {
        return ParityFit { harmonic: 0, period: None, contrast: 0.0, coefficient: ZERO };
    }
    best.period = Some(2.0 * std::f64::consts::PI / best.harmonic as f64);
    best
}

/// Bell-fidelity estimator `(P00 + P11)/2 + C/2` from populations and parity contrast.
pub fn fidelity_from_populations_and_parity(p00: f64, p11: f64, contrast: f64) -> Result<f64> {
    for (name, v) in [("P00", p00), ("P11", p11), ("contrast", contrast)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    Ok(0.5 * (p00 + p11) + 0.5 * contrast)
}

/// Populations and two-qubit parity contrast of a reduced spin state, as the experiment
/// would measure them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorInputs {
    pub p00: f64,
    pub p11: f64,
    pub contrast: f64,
    pub estimate: f64,
}

pub fn estimator_inputs(rho: &DMatrix<Complex64>, grid_points: usize) -> Result<EstimatorInputs> {
    let values = parity_scan_density(rho, &[0, 1], &phase_grid(grid_points));
    let fit = fit_parity(&values);
    // The ρ_{00,11} coherence appears at the second harmonic.
    let contrast = if fit.harmonic == 2 { fit.contrast.min(1.0) } else { 0.0 };
    let (p00, p11) = (rho[(0, 0)].re.clamp(0.0, 1.0), rho[(3, 3)].re.clamp(0.0, 1.0));
    let estimate = fidelity_from_populations_and_parity(p00, p11, contrast)?;
    Ok(EstimatorInputs { p00, p11, contrast, estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn random_alphas(rng: &mut ChaCha8Rng, n_modes: usize, max: f64) -> TrajectorySet {
        let mut draw = || {
            let r = max * rng.random::<f64>().sqrt();
            Complex64::from_polar(r, 2.0 * PI * rng.random::<f64>())
        };
        let a: Vec<Complex64> = (0..n_modes).map(|_| draw()).collect();
        let b: Vec<Complex64> = (0..n_modes).map(|_| draw()).collect();
        TrajectorySet::from_alphas(a, b)
    }

    #[test]
    fn ideal_and_idle_gates() {
        let zero = TrajectorySet::from_alphas(vec![ZERO; 2], vec![ZERO; 2]);
        let th = ThermalSpec::ground(2);
        assert!((bell_fidelity_analytic(&zero, FRAC_PI_4, &th) - 1.0).abs() < 1e-15);
        assert!((bell_fidelity_analytic(&zero, -FRAC_PI_4, &th) - 1.0).abs() < 1e-15);
        assert!((bell_fidelity_analytic(&zero, 0.0, &th) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reduced_density_matches_analytic_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = ThermalSpec { nbar: vec![0.3, 1.0] };
        let alphas = random_alphas(&mut rng, 2, 0.5);
        let chi = -0.7;
        let rho = reduced_spin_after_gate(&alphas, chi, &th);
        let direct = state_fidelity(&rho, &bell_target(chi_sign(chi)));
        assert!((direct - bell_fidelity_analytic(&alphas, chi, &th)).abs() < 1e-14);
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_pulse_is_identity() {
        let zero = TrajectorySet::from_alphas(vec![ZERO; 2], vec![ZERO; 2]);
        let mut v = DVector::from_fn(4 * 12, |k, _| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos()));
        v /= Complex64::new(v.norm(), 0.0);
        let state = QuantumState { representation: Representation::Pure(v.clone()), cutoffs: vec![3, 4], leakage: 0.0 };
        let out = evolve_with(&zero, 0.0, &state, DEFAULT_DIMENSION_CAP).unwrap();
        match out.representation {
            Representation::Pure(w) => assert!((w - v).camax() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn pure_mixture_and_branched_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let alphas = random_alphas(&mut rng, 2, 0.6);
            let chi = rng.random_range(-1.0..1.0);
            let th = ThermalSpec { nbar: vec![0.2, 0.1] };
            let cutoffs = vec![24, 24];
            let mixed = evolve_with(&alphas, chi, &QuantumState::thermal_mixture(&th, cutoffs.clone()).unwrap(), DEFAULT_DIMENSION_CAP).unwrap();
            let branched = evolve_with(&alphas, chi, &QuantumState::thermal_branched(&th, cutoffs), DEFAULT_DIMENSION_CAP).unwrap();
            assert!((mixed.reduced_spin() - branched.reduced_spin()).camax() < 1e-10);
            assert!(mixed.is_converged() && branched.is_converged());
            assert!((mixed.trace() - 1.0).abs() < 1e-10);
            let analytic = reduced_spin_after_gate(&alphas, chi, &th);
            assert!((analytic - branched.reduced_spin()).camax() < 1e-8);
        }
    }

    #[test]
    fn evolution_is_linear_and_norm_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alphas = random_alphas(&mut rng, 1, 0.8);
        let cut = vec![30];
        let a = QuantumState::spin_basis_ground((0, 0), cut.clone());
        let b = QuantumState::spin_basis_ground((1, 0), cut.clone());
        let pure = |s: &QuantumState| match &s.representation {
            Representation::Pure(v) => v.clone(),
            _ => unreachable!(),
        };
        let (ca, cb) = (Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        let sum = QuantumState {
            representation: Representation::Pure(pure(&a) * ca + pure(&b) * cb),
            cutoffs: cut,
            leakage: 0.0,
        };
        let ea = pure(&evolve_with(&alphas, 0.4, &a, DEFAULT_DIMENSION_CAP).unwrap());
        let eb = pure(&evolve_with(&alphas, 0.4, &b, DEFAULT_DIMENSION_CAP).unwrap());
        let es = pure(&evolve_with(&alphas, 0.4, &sum, DEFAULT_DIMENSION_CAP).unwrap());
        assert!((es.clone() - (ea * ca + eb * cb)).camax() < 1e-12);
        assert!((es.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn branch_overlap_matches_truncated_displacements() {
        for nbar in [0.0, 1.0] {
            let th = ThermalSpec { nbar: vec![nbar] };
            let (beta, beta_p) = (Complex64::new(0.3, -0.5), Complex64::new(-0.4, 0.2));
            let d = 60;
            let basis = DisplacementBasis::new(d);
            let w = th.weights(0);
            let m = basis.displacement(beta_p).adjoint() * basis.displacement(beta);
            let numeric: Complex64 = w.iter().enumerate().map(|(n, p)| m[(n, n)] * *p).sum();
            assert!((numeric - branch_overlap(beta, beta_p, nbar)).norm() < 1e-8);
        }
    }

    #[test]
    fn analytic_matches_exact_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n_modes = rng.random_range(1..=3);
            let alphas = random_alphas(&mut rng, n_modes, 1.0);
            let nbar = [0.0, 0.5, 2.0][rng.random_range(0..3)];
            let th = ThermalSpec::uniform(n_modes, nbar);
            let chi = FRAC_PI_4 * if rng.random::<bool>() { 1.0 } else { -1.0 } + rng.random_range(-0.1..0.1);
            let exact = bell_fidelity_exact(&alphas, chi, &th).unwrap();
            assert!(exact.converged);
            assert!((exact.fidelity - bell_fidelity_analytic(&alphas, chi, &th)).abs() < 1e-6);
        }
    }

    #[test]
    fn fidelity_decreases_with_single_residual() {
        let th = ThermalSpec::ground(2);
        let mut last = 1.0;
        for k in 0..40 {
            let r = 0.05 * k as f64;
            let alphas = TrajectorySet::from_alphas(vec![Complex64::new(r, 0.0), ZERO], vec![ZERO; 2]);
            let f = bell_fidelity_analytic(&alphas, FRAC_PI_4, &th);
            assert!(f <= last + 1e-15);
            last = f;
        }
        let small = TrajectorySet::from_alphas(vec![Complex64::new(1e-3, 0.0), ZERO], vec![ZERO, Complex64::new(0.0, 2e-3)]);
        let leading = leading_order_infidelity(&small, &th);
        assert!(((1.0 - bell_fidelity_analytic(&small, FRAC_PI_4, &th)) / leading - 1.0).abs() < 1e-4);
    }

    #[test]
    fn parity_of_bell_and_product_states() {
        let grid = phase_grid(64);
        let bell = bell_target(1.0);
        let rho = &bell * bell.adjoint();
        let fit = fit_parity(&parity_scan_density(&rho, &[0, 1], &grid));
        assert_eq!(fit.period, Some(PI));
        assert!((fit.contrast - 1.0).abs() < 1e-12);
        // |00⟩: each qubit ends on the equator, so every parity value vanishes.
        let mut ground = DMatrix::zeros(4, 4);
        ground[(0, 0)] = ONE;
        let values = parity_scan_density(&ground, &[0, 1], &grid);
        assert!(values.iter().all(|p| p.abs() < 1e-15));
        assert_eq!(fit_parity(&values).period, None);
    }

    #[test]
    fn estimator_tracks_analytic_fidelity() {
        assert_eq!(fidelity_from_populations_and_parity(0.5, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(fidelity_from_populations_and_parity(1.0, 0.0, 0.0).unwrap(), 0.5);
        assert!(fidelity_from_populations_and_parity(1.2, 0.0, 0.0).is_err());
        let th = ThermalSpec::uniform(2, 0.5);
        let alphas = TrajectorySet::from_alphas(
            vec![Complex64::new(0.02, 0.01), Complex64::new(-0.01, 0.0)],
            vec![Complex64::new(0.02, 0.01), Complex64::new(0.01, 0.0)],
        );
        let rho = reduced_spin_after_gate(&alphas, FRAC_PI_4, &th);
        let est = estimator_inputs(&rho, 64).unwrap();
        assert!((est.estimate - bell_fidelity_analytic(&alphas, FRAC_PI_4, &th)).abs() < 1e-6);
    }
}
