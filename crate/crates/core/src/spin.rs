//! Qubit conventions shared by the simulator and the circuit tools.
//!
//! Basis states are written `|q_1 q_2 … q_n⟩` with qubit 1 as the most significant bit of
//! the amplitude index. Qubit indices passed to functions in this module are 0-based.
//!
//! - `R(θ, φ) = exp[-i(θ/2)(σ_x cos φ + σ_y sin φ)]`
//! - `R_z(θ) = exp[+i(θ/2)σ_z] = diag(e^{iθ/2}, e^{-iθ/2})`
//! - `XX(χ) = exp[iχ σ_x⊗σ_x]`
//!
//! With these, `R(π/2,0)·R(π/2,π/2)·R(-π/2,0) = R_z(-π/2)` as an operator product; in time
//! order the pulses read `R(-π/2,0)` first.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub type Gate1 = Matrix2<Complex64>;

pub fn pauli_x() -> Gate1 {
    Gate1::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Gate1 {
    Gate1::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Gate1 {
    Gate1::new(ONE, ZERO, ZERO, -ONE)
}

/// Equatorial rotation `R(θ, φ)`.
pub fn rotation(theta: f64, phi: f64) -> Gate1 {
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let off = -I * s;
    Gate1::new(
        Complex64::new(c, 0.0),
        off * Complex64::from_polar(1.0, -phi),
        off * Complex64::from_polar(1.0, phi),
        Complex64::new(c, 0.0),
    )
}

/// `R_z(θ) = diag(e^{iθ/2}, e^{-iθ/2})`.
pub fn rz(theta: f64) -> Gate1 {
    Gate1::new(Complex64::from_polar(1.0, 0.5 * theta), ZERO, ZERO, Complex64::from_polar(1.0, -0.5 * theta))
}

/// Hadamard, mapping the σ_z basis to the σ_x basis `|±⟩`.
pub fn hadamard() -> Gate1 {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Gate1::new(h, h, h, -h)
}

#[inline]
pub fn bit(index: usize, qubit: usize, n_qubits: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

/// Applies a one-qubit gate to `qubit` of a register stored as a contiguous vector of
/// `2^n_qubits` amplitudes.
pub fn apply_1q(state: &mut [Complex64], n_qubits: usize, qubit: usize, gate: &Gate1) {
    let stride = 1usize << (n_qubits - 1 - qubit);
    let dim = 1usize << n_qubits;
    debug_assert_eq!(state.len(), dim);
    for base in (0..dim).filter(|i| i & stride == 0) {
        let (x0, x1) = (state[base], state[base | stride]);
        state[base] = gate[(0, 0)] * x0 + gate[(0, 1)] * x1;
        state[base | stride] = gate[(1, 0)] * x0 + gate[(1, 1)] * x1;
    }
}

/// Applies `exp[iχ σ_x⊗σ_x]` to qubits `qa` and `qb`.
pub fn apply_xx(state: &mut [Complex64], n_qubits: usize, qa: usize, qb: usize, chi: f64) {
    let flip = (1usize << (n_qubits - 1 - qa)) | (1usize << (n_qubits - 1 - qb));
    let (c, s) = (Complex64::new(chi.cos(), 0.0), I * chi.sin());
    let old = state.to_vec();
    for (k, amp) in state.iter_mut().enumerate() {
        *amp = c * old[k] + s * old[k ^ flip];
    }
}

/// `U ρ U†` for a one-qubit gate acting on a register density matrix.
pub fn conjugate_1q(rho: &mut DMatrix<Complex64>, n_qubits: usize, qubit: usize, gate: &Gate1) {
    for mut col in rho.column_iter_mut() {
        apply_1q(col.as_mut_slice(), n_qubits, qubit, gate);
    }
    rho.adjoint_mut();
    for mut col in rho.column_iter_mut() {
        apply_1q(col.as_mut_slice(), n_qubits, qubit, gate);
    }
    rho.adjoint_mut();
}

/// `⟨Π_{q∈S} σ_z^{(q)}⟩` from the diagonal of a register state.
pub fn parity_from_probabilities(probabilities: impl Iterator<Item = f64>, n_qubits: usize, qubits: &[usize]) -> f64 {
    probabilities
        .enumerate()
        .map(|(k, p)| {
            let ones: usize = qubits.iter().map(|&q| bit(k, q, n_qubits)).sum();
            if ones.is_multiple_of(2) { p } else { -p }
        })
        .sum()
}

/// Projective distance `1 - |tr(A†B)| / d` between two unitaries, zero iff they agree up
/// to a global phase.
pub fn projective_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let d = a.nrows() as f64;
    1.0 - (a.adjoint() * b).trace().norm() / d
}

pub fn to_dmatrix(g: &Gate1) -> DMatrix<Complex64> {
    DMatrix::from_iterator(2, 2, g.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn expm_i_hermitian(h: &Gate1, t: f64) -> Gate1 {
        // exp(-i t H) by eigendecomposition of a 2×2 Hermitian matrix.
        let eig = nalgebra::Matrix2::<Complex64>::from(*h).symmetric_eigen();
        let v = eig.eigenvectors;
        let d = Gate1::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -t * e)));
        v * d * v.adjoint()
    }

    fn close(a: &Gate1, b: &Gate1, tol: f64) -> bool {
        (a - b).iter().all(|x| x.norm() < tol)
    }

    #[test]
    fn rotation_matches_exponential() {
        for (theta, phi) in [(0.3, 0.0), (FRAC_PI_2, 1.1), (-2.0, -0.4), (PI, PI)] {
            let gen = (pauli_x() * Complex64::new(phi.cos(), 0.0) + pauli_y() * Complex64::new(phi.sin(), 0.0)) * Complex64::new(0.5, 0.0);
            assert!(close(&rotation(theta, phi), &expm_i_hermitian(&gen, theta), 1e-13));
        }
        assert!(close(&rz(0.7), &expm_i_hermitian(&(pauli_z() * Complex64::new(-0.5, 0.0)), 0.7), 1e-13));
    }

    #[test]
    fn rz_decomposition_is_an_operator_product() {
        let product = rotation(FRAC_PI_2, 0.0) * rotation(FRAC_PI_2, FRAC_PI_2) * rotation(-FRAC_PI_2, 0.0);
        let d = projective_distance(&to_dmatrix(&product), &to_dmatrix(&rz(-FRAC_PI_2)));
        assert!(d < 1e-12, "{d}");
        // The reverse reading gives a different operation.
        let reversed = rotation(-FRAC_PI_2, 0.0) * rotation(FRAC_PI_2, FRAC_PI_2) * rotation(FRAC_PI_2, 0.0);
        assert!(projective_distance(&to_dmatrix(&reversed), &to_dmatrix(&rz(-FRAC_PI_2))) > 0.1);
    }

    #[test]
    fn xx_twice_is_i_xx() {
        let mut u = DMatrix::<Complex64>::identity(4, 4);
        for mut col in u.column_iter_mut() {
            apply_xx(col.as_mut_slice(), 2, 0, 1, FRAC_PI_4);
            apply_xx(col.as_mut_slice(), 2, 0, 1, FRAC_PI_4);
        }
        let x = to_dmatrix(&pauli_x());
        let target = x.kronecker(&x) * I;
        assert!((u - target).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn one_qubit_gate_acts_on_the_right_bit() {
        // X on qubit 0 of |00⟩ gives |10⟩, index 2.
        let mut s = vec![ONE, ZERO, ZERO, ZERO];
        apply_1q(&mut s, 2, 0, &pauli_x());
        assert_eq!(s[2], ONE);
        apply_1q(&mut s, 2, 1, &pauli_x());
        assert_eq!(s[3], ONE);
    }

    #[test]
    fn density_conjugation_matches_state_vector() {
        let mut psi = vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8), ZERO, ZERO];
        let mut rho = DMatrix::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let g = rotation(0.9, 0.4);
        apply_1q(&mut psi, 2, 1, &g);
        conjugate_1q(&mut rho, 2, 1, &g);
        let expected = DMatrix::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        assert!((rho - expected).iter().all(|z| z.norm() < 1e-14));
    }
}
