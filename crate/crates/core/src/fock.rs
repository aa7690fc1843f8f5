//! Truncated Fock-space operators for a single motional mode.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Eigendecomposition of the truncated quadrature `X = a + a†`, reused for every
/// displacement in a space of dimension `d`.
#[derive(Clone, Debug)]
pub struct DisplacementBasis {
    pub dim: usize,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DisplacementBasis {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        let x = DMatrix::from_fn(dim, dim, |i, j| {
            if i + 1 == j {
                (j as f64).sqrt()
            } else if j + 1 == i {
                (i as f64).sqrt()
            } else {
                0.0
            }
        });
        let eig = x.symmetric_eigen();
        DisplacementBasis { dim, eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors }
    }

    /// `exp(β a† - β* a)` on the truncated space.
    ///
    /// With `ψ = arg β + π/2` the generator is `e^{iψn̂} (-i|β| X) e^{-iψn̂}`, so the
    /// exponential needs only the fixed eigenbasis of `X`.
    pub fn displacement(&self, beta: Complex64) -> DMatrix<Complex64> {
        let d = self.dim;
        let (r, psi) = (beta.norm(), beta.arg() + std::f64::consts::FRAC_PI_2);
        let v = &self.eigenvectors;
        let phases: Vec<Complex64> = self.eigenvalues.iter().map(|&x| Complex64::from_polar(1.0, -r * x)).collect();
        let mut core = DMatrix::<Complex64>::zeros(d, d);
        for j in 0..d {
            for i in 0..=j {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += phases[k] * (v[(i, k)] * v[(j, k)]);
                }
                core[(i, j)] = acc;
                core[(j, i)] = acc;
            }
        }
        DMatrix::from_fn(d, d, |i, j| core[(i, j)] * Complex64::from_polar(1.0, psi * (i as f64 - j as f64)))
    }
}

/// Coherent-state populations `e^{-|α|²}|α|^{2n}/n!` for `n < dim`.
pub fn poisson_populations(mean: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let mut p = (-mean).exp();
    for n in 0..dim {
        out.push(p);
        p *= mean / (n as f64 + 1.0);
    }
    out
}

/// Bose-Einstein weights `(1-q) qⁿ` with `q = n̄/(n̄+1)`.
pub fn thermal_weights(nbar: f64, count: usize) -> Vec<f64> {
    let q = nbar / (nbar + 1.0);
    (0..count).map(|n| (1.0 - q) * q.powi(n as i32)).collect()
}

/// Number of Fock levels `K` kept for a thermal state: the smallest `K` whose discarded
/// weight `q^K` is below `tail`.
pub fn thermal_cutoff(nbar: f64, tail: f64) -> usize {
    if nbar <= 0.0 {
        return 1;
    }
    let q = nbar / (nbar + 1.0);
    let mut k = 1;
    while q.powi(k as i32) >= tail {
        k += 1;
    }
    k
}

/// Fock dimension large enough to hold a displacement of size `beta_max` applied to
/// levels below `levels`.
pub fn suggested_dimension(levels: usize, beta_max: f64) -> usize {
    let n = levels as f64;
    let spread = beta_max * beta_max + 2.0 * beta_max * n.sqrt();
    (n + spread + 8.0 * (spread + n).sqrt() + 12.0).ceil() as usize
}
