//! Spin-register circuits built from XX gates and single-qubit rotations.
//!
//! Qubits are numbered from 1 in every public signature; qubit 1 is the most significant
//! bit of the amplitude index. Gate conventions are those of [`crate::spin`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::fidelity::{self, ParityFit};
use crate::spin;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Smallest post-selection probability accepted by [`conditioned_parity`].
pub const MIN_POSTSELECTION: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CircuitOp {
    /// `exp[i·sign·(π/4) σ_x⊗σ_x]` on the pair.
    Xx { pair: (usize, usize), sign: i32 },
    /// `R(θ, φ)` on every target.
    R { theta: f64, phi: f64, targets: Vec<usize> },
    /// `R_z(angle)` on every target.
    Rz { angle: f64, targets: Vec<usize> },
}

impl CircuitOp {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let in_range = |q: usize| q >= 1 && q <= n_qubits;
        match self {
            CircuitOp::Xx { pair: (a, b), sign } => {
                if !in_range(*a) || !in_range(*b) || a == b {
                    return Err(Error::InvalidCircuit(format!("XX pair ({a}, {b}) must be two distinct qubits in 1..={n_qubits}")));
                }
                if sign.abs() != 1 {
                    return Err(Error::InvalidCircuit(format!("XX sign must be +1 or -1, got {sign}")));
                }
            }
            CircuitOp::R { theta, phi, targets } => {
                if !theta.is_finite() || !phi.is_finite() {
                    return Err(Error::InvalidCircuit("rotation angles must be finite".into()));
                }
                check_targets(targets, n_qubits)?;
            }
            CircuitOp::Rz { angle, targets } => {
                if !angle.is_finite() {
                    return Err(Error::InvalidCircuit("rotation angle must be finite".into()));
                }
                check_targets(targets, n_qubits)?;
            }
        }
        Ok(())
    }
}

fn check_targets(targets: &[usize], n_qubits: usize) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidCircuit("rotation without targets".into()));
    }
    if let Some(q) = targets.iter().find(|&&q| q == 0 || q > n_qubits) {
        return Err(Error::InvalidCircuit(format!("target qubit {q} outside 1..={n_qubits}")));
    }
    Ok(())
}

/// XX(1,2) followed by XX(2,3).
pub fn two_xx_circuit() -> Vec<CircuitOp> {
    vec![CircuitOp::Xx { pair: (1, 2), sign: 1 }, CircuitOp::Xx { pair: (2, 3), sign: 1 }]
}

/// `R_z(-π/2)` on `qubit` from three equatorial pulses, listed in time order.
pub fn rz_minus_half_pi(qubit: usize) -> Vec<CircuitOp> {
    vec![
        CircuitOp::R { theta: -FRAC_PI_2, phi: 0.0, targets: vec![qubit] },
        CircuitOp::R { theta: FRAC_PI_2, phi: FRAC_PI_2, targets: vec![qubit] },
        CircuitOp::R { theta: FRAC_PI_2, phi: 0.0, targets: vec![qubit] },
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegisterState {
    pub n_qubits: usize,
    pub amplitudes: Vec<Complex64>,
}

impl RegisterState {
    pub fn zeros(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        RegisterState { n_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = amplitudes.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidInput(format!("register length {n} is not a power of two")));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("register norm {norm} differs from 1")));
        }
        Ok(RegisterState { n_qubits: n.trailing_zeros() as usize, amplitudes })
    }

    /// Amplitude of the basis state written as a bit string, qubit 1 first.
    pub fn amplitude(&self, bits: &str) -> Complex64 {
        self.amplitudes[usize::from_str_radix(bits, 2).expect("binary label")]
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.populations().iter().sum::<f64>().sqrt()
    }

    /// `|⟨target|ψ⟩|²`.
    pub fn fidelity_with(&self, target: &[Complex64]) -> f64 {
        target.iter().zip(&self.amplitudes).map(|(t, a)| t.conj() * a).sum::<Complex64>().norm_sqr()
    }

    pub fn density(&self) -> RegisterDensity {
        let a = &self.amplitudes;
        RegisterDensity { n_qubits: self.n_qubits, rho: DMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * a[j].conj()) }
    }
}

pub fn basis_label(index: usize, n_qubits: usize) -> String {
    format!("{index:0n_qubits$b}")
}

/// `(|000⟩ + i|110⟩ + i|011⟩ - |101⟩)/2`.
pub fn two_xx_target() -> RegisterState {
    let mut a = vec![ZERO; 8];
    a[0b000] = Complex64::new(0.5, 0.0);
    a[0b110] = Complex64::new(0.0, 0.5);
    a[0b011] = Complex64::new(0.0, 0.5);
    a[0b101] = Complex64::new(-0.5, 0.0);
    RegisterState { n_qubits: 3, amplitudes: a }
}

/// `(|0…0⟩ + i|1…1⟩)/√2`.
pub fn ghz_target(n_qubits: usize) -> Vec<Complex64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![ZERO; 1 << n_qubits];
    a[0] = Complex64::new(r, 0.0);
    a[(1 << n_qubits) - 1] = Complex64::new(0.0, r);
    a
}

fn validate_all(circuit: &[CircuitOp], n_qubits: usize) -> Result<()> {
    circuit.iter().enumerate().try_for_each(|(k, op)| {
        op.validate(n_qubits).map_err(|e| match e {
            Error::InvalidCircuit(m) => Error::InvalidCircuit(format!("operation {}: {m}", k + 1)),
            other => other,
        })
    })
}

fn one_qubit_gate(op: &CircuitOp) -> Option<(spin::Gate1, &[usize])> {
    match op {
        CircuitOp::R { theta, phi, targets } => Some((spin::rotation(*theta, *phi), targets)),
        CircuitOp::Rz { angle, targets } => Some((spin::rz(*angle), targets)),
        CircuitOp::Xx { .. } => None,
    }
}

/// Applies the operations in order.
pub fn apply(circuit: &[CircuitOp], initial: &RegisterState) -> Result<RegisterState> {
    validate_all(circuit, initial.n_qubits)?;
    let n = initial.n_qubits;
    let mut state = initial.clone();
    for op in circuit {
        match one_qubit_gate(op) {
            Some((gate, targets)) => targets.iter().for_each(|&q| spin::apply_1q(&mut state.amplitudes, n, q - 1, &gate)),
            None => {
                if let CircuitOp::Xx { pair: (a, b), sign } = op {
                    spin::apply_xx(&mut state.amplitudes, n, a - 1, b - 1, *sign as f64 * FRAC_PI_4);
                }
            }
        }
    }
    Ok(state)
}

/// `R_z(-π/2)` on `middle`, then `R(π/2, 0)` on every qubit.
pub fn ghz_transform(state: &RegisterState, middle: usize) -> Result<RegisterState> {
    let mut ops = rz_minus_half_pi(middle);
    ops.push(CircuitOp::R { theta: FRAC_PI_2, phi: 0.0, targets: (1..=state.n_qubits).collect() });
    apply(&ops, state)
}

// ---------------------------------------------------------------------------------------
// Density matrices

#[derive(Clone, Debug, PartialEq)]
pub struct RegisterDensity {
    pub n_qubits: usize,
    pub rho: DMatrix<Complex64>,
}

impl RegisterDensity {
    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1 << n_qubits;
        RegisterDensity { n_qubits, rho: DMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0) }
    }

    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn fidelity_with(&self, target: &[Complex64]) -> f64 {
        let d = target.len();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += target[i].conj() * self.rho[(i, j)] * target[j];
            }
        }
        acc.re
    }

    /// Reduced density matrix of `keep` (1-based, in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<RegisterDensity> {
        let n = self.n_qubits;
        if keep.iter().any(|&q| q == 0 || q > n) || has_duplicates(keep) {
            return Err(Error::InvalidInput(format!("cannot keep qubits {keep:?} of a {n}-qubit register")));
        }
        let k = keep.len();
        let rest: Vec<usize> = (1..=n).filter(|q| !keep.contains(q)).collect();
        let compose = |kept: usize, traced: usize| -> usize {
            let mut index = 0;
            for (pos, &q) in keep.iter().enumerate() {
                index |= ((kept >> (k - 1 - pos)) & 1) << (n - q);
            }
            for (pos, &q) in rest.iter().enumerate() {
                index |= ((traced >> (rest.len() - 1 - pos)) & 1) << (n - q);
            }
            index
        };
        let rho = DMatrix::from_fn(1 << k, 1 << k, |i, j| (0..1usize << rest.len()).map(|t| self.rho[(compose(i, t), compose(j, t))]).sum());
        Ok(RegisterDensity { n_qubits: k, rho })
    }
}

fn has_duplicates(q: &[usize]) -> bool {
    q.iter().enumerate().any(|(i, x)| q[..i].contains(x))
}

/// Replacement for ideal XX gates: a two-spin channel given by its σ_x-basis multiplier
/// (see [`fidelity::branch_kernel`]) for the `+1` gate; the `-1` gate uses the conjugate.
#[derive(Clone, Debug)]
pub struct NoisyXx {
    pub kernel: DMatrix<Complex64>,
    pub sign: i32,
}

fn apply_channel(rho: &mut RegisterDensity, qa: usize, qb: usize, kernel: &DMatrix<Complex64>) {
    let n = rho.n_qubits;
    let h = spin::hadamard();
    spin::conjugate_1q(&mut rho.rho, n, qa, &h);
    spin::conjugate_1q(&mut rho.rho, n, qb, &h);
    let branch = |i: usize| 2 * spin::bit(i, qa, n) + spin::bit(i, qb, n);
    let d = rho.rho.nrows();
    for i in 0..d {
        for j in 0..d {
            rho.rho[(i, j)] *= kernel[(branch(i), branch(j))];
        }
    }
    spin::conjugate_1q(&mut rho.rho, n, qa, &h);
    spin::conjugate_1q(&mut rho.rho, n, qb, &h);
}

/// Density-matrix version of [`apply`]; with `noisy` set, every XX gate is replaced by the
/// given channel.
pub fn apply_density(circuit: &[CircuitOp], initial: &RegisterDensity, noisy: Option<&NoisyXx>) -> Result<RegisterDensity> {
    validate_all(circuit, initial.n_qubits)?;
    let n = initial.n_qubits;
    let mut state = initial.clone();
    for op in circuit {
        match one_qubit_gate(op) {
            Some((gate, targets)) => targets.iter().for_each(|&q| spin::conjugate_1q(&mut state.rho, n, q - 1, &gate)),
            None => {
                if let CircuitOp::Xx { pair: (a, b), sign } = op {
                    let kernel = match noisy {
                        Some(ch) if *sign == ch.sign => ch.kernel.clone(),
                        Some(ch) => ch.kernel.map(|z| z.conj()),
                        None => ideal_kernel(*sign as f64 * FRAC_PI_4),
                    };
                    apply_channel(&mut state, a - 1, b - 1, &kernel);
                }
            }
        }
    }
    Ok(state)
}

fn ideal_kernel(chi: f64) -> DMatrix<Complex64> {
    let p = |b: usize| if (b >> 1) ^ (b & 1) == 0 { 1.0 } else { -1.0 };
    DMatrix::from_fn(4, 4, |s, t| Complex64::from_polar(1.0, chi * (p(s) - p(t))))
}

// ---------------------------------------------------------------------------------------
// Parity analysis

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityCurve {
    pub phi: Vec<f64>,
    pub parity: Vec<f64>,
    pub fit: ParityFit,
}

fn parity_curve(rho: &DMatrix<Complex64>, analyzed: &[(usize, f64)], points: usize) -> ParityCurve {
    let phi = fidelity::phase_grid(points);
    let parity = fidelity::parity_scan_with_phases(rho, analyzed, &phi);
    let fit = fidelity::fit_parity(&parity);
    ParityCurve { phi, parity, fit }
}

/// Parity of the analyzed qubits (1-based) under shared `R(π/2, φ)` analysis pulses, on a
/// uniform grid of `points` phases over `[0, 2π)`.
pub fn parity_scan(state: &RegisterDensity, analyzed: &[usize], points: usize) -> Result<ParityCurve> {
    check_qubits(analyzed, state.n_qubits)?;
    Ok(parity_curve(&state.rho, &analyzed.iter().map(|&q| (q - 1, 1.0)).collect::<Vec<_>>(), points))
}

fn check_qubits(qubits: &[usize], n: usize) -> Result<()> {
    if qubits.is_empty() || qubits.iter().any(|&q| q == 0 || q > n) || has_duplicates(qubits) {
        return Err(Error::InvalidInput(format!("qubits {qubits:?} must be distinct and within 1..={n}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionedParity {
    pub pair: (usize, usize),
    pub witness: usize,
    pub witness_value: usize,
    pub probability: f64,
    pub curve: ParityCurve,
}

fn project(state: &RegisterDensity, witness: usize, value: usize) -> Result<(RegisterDensity, f64)> {
    let n = state.n_qubits;
    let keep = |i: usize| spin::bit(i, witness - 1, n) == value;
    let d = state.rho.nrows();
    let rho = DMatrix::from_fn(d, d, |i, j| if keep(i) && keep(j) { state.rho[(i, j)] } else { ZERO });
    let probability = rho.trace().re;
    if probability < MIN_POSTSELECTION {
        return Err(Error::PostSelectionVanishing { probability });
    }
    Ok((RegisterDensity { n_qubits: n, rho: rho / Complex64::new(probability, 0.0) }, probability))
}

fn conditioned(
    state: &RegisterDensity,
    pair: (usize, usize),
    witness: usize,
    witness_value: usize,
    counter_rotating: bool,
    points: usize,
) -> Result<ConditionedParity> {
    check_qubits(&[pair.0, pair.1, witness], state.n_qubits)?;
    if witness_value > 1 {
        return Err(Error::InvalidInput(format!("witness value must be 0 or 1, got {witness_value}")));
    }
    let (projected, probability) = project(state, witness, witness_value)?;
    let second = if counter_rotating { -1.0 } else { 1.0 };
    let curve = parity_curve(&projected.rho, &[(pair.0 - 1, 1.0), (pair.1 - 1, second)], points);
    Ok(ConditionedParity { pair, witness, witness_value, probability, curve })
}

/// Post-selects `witness` on `witness_value`, applies `R(π/2, φ)` to both qubits of `pair`
/// and records their parity.
pub fn conditioned_parity(
    state: &RegisterDensity,
    pair: (usize, usize),
    witness: usize,
    witness_value: usize,
    points: usize,
) -> Result<ConditionedParity> {
    conditioned(state, pair, witness, witness_value, false, points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coherence {
    pub pair: (usize, usize),
    pub witness: usize,
    pub witness_value: usize,
    pub probability: f64,
    /// Analysis phases `(φ, -φ)` instead of `(φ, φ)`.
    pub counter_rotating: bool,
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub triple: [usize; 3],
    pub coherences: Vec<Coherence>,
    /// Populations of `|q_1 q_2 q_3⟩` for the triple, index order.
    pub populations: Vec<f64>,
    pub fidelity: f64,
}

/// Six conditioned coherences and the populations of a three-qubit subset, combined into a
/// fidelity estimate against `(|000⟩ + i|110⟩ + i|011⟩ - |101⟩)/2` on that triple.
///
/// Each pair of support states differs on two qubits and agrees on the third, which is the
/// witness. When the two support states have equal bits on the pair the coherence shows up
/// under shared phases; otherwise the analysis phases counter-rotate.
pub fn coherence_report(state: &RegisterDensity, triple: [usize; 3], points: usize) -> Result<CoherenceReport> {
    check_qubits(&triple, state.n_qubits)?;
    let reduced = state.partial_trace(&triple)?;
    let support: Vec<usize> = two_xx_target().populations().iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(k, _)| k).collect();
    let mut coherences = Vec::with_capacity(6);
    for (x, y, w) in [(1, 2, 3), (1, 3, 2), (2, 3, 1)] {
        for value in 0..2 {
            let states: Vec<usize> = support.iter().copied().filter(|&k| spin::bit(k, w - 1, 3) == value).collect();
            let even = spin::bit(states[0], x - 1, 3) == spin::bit(states[0], y - 1, 3);
            let c = conditioned(&reduced, (x, y), w, value, !even, points);
            let (probability, contrast) = match c {
                Ok(c) => (c.probability, if c.curve.fit.harmonic == 2 { c.curve.fit.contrast } else { 0.0 }),
                Err(Error::PostSelectionVanishing { probability }) => (probability, 0.0),
                Err(e) => return Err(e),
            };
            coherences.push(Coherence {
                pair: (triple[x - 1], triple[y - 1]),
                witness: triple[w - 1],
                witness_value: value,
                probability,
                counter_rotating: !even,
                contrast,
            });
        }
    }
    let populations = reduced.populations();
    let on_support: f64 = support.iter().map(|&k| populations[k]).sum();
    let coherent: f64 = coherences.iter().map(|c| c.probability * c.contrast).sum();
    Ok(CoherenceReport { triple, coherences, populations, fidelity: 0.25 * on_support + 0.25 * coherent })
}
