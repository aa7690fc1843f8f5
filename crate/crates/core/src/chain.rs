//! Equilibrium configuration and normal modes of a linear ion chain.
//!
//! Positions are solved in the dimensionless units of the axial problem: lengths in
//! `ℓ = (e² / (4π ε₀ M ω_z²))^{1/3}` and energies in `M ω_z² ℓ²`, for which the potential is
//!
//! ```text
//! V(u) = Σ_i u_i² / 2 + Σ_{i<j} 1 / |u_i - u_j|
//! ```
//!
//! The mode Hessians are expressed in units of `ω_z²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::constants::{coulomb_strength, default_delta_k, HBAR, YB171_MASS};
use crate::error::{Error, Result};

const EQUILIBRIUM_TOLERANCE: f64 = 1e-13;
const MAX_NEWTON_ITERATIONS: usize = 200;

/// Physical description of the trap and ion species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub n_ions: usize,
    /// Transverse center-of-mass frequency, rad/s.
    pub omega_x: f64,
    /// Axial center-of-mass frequency, rad/s.
    pub omega_z: f64,
    /// Ion mass, kg.
    pub ion_mass: f64,
    /// Magnitude of the Raman wavevector difference, 1/m.
    pub delta_k: f64,
    pub label: String,
}

impl TrapConfig {
    /// A chain of ¹⁷¹Yb⁺ ions with the default Raman geometry.
    pub fn ytterbium(n_ions: usize, omega_x: f64, omega_z: f64) -> Result<Self> {
        let config = TrapConfig {
            n_ions,
            omega_x,
            omega_z,
            ion_mass: YB171_MASS,
            delta_k: default_delta_k(),
            label: String::new(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_ions == 0 {
            problems.push("n_ions must be at least 1".to_string());
        }
        if !(self.omega_z.is_finite() && self.omega_z > 0.0) {
            problems.push(format!("omega_z must be positive and finite, got {}", self.omega_z));
        }
        if !self.omega_x.is_finite() || self.omega_x <= self.omega_z {
            problems.push(format!(
                "linear-chain regime violated: need omega_x > omega_z, got omega_x = {}, omega_z = {}",
                self.omega_x, self.omega_z
            ));
        }
        if !(self.ion_mass.is_finite() && self.ion_mass > 0.0) {
            problems.push(format!("ion_mass must be positive, got {}", self.ion_mass));
        }
        if !(self.delta_k.is_finite() && self.delta_k > 0.0) {
            problems.push(format!("delta_k must be positive, got {}", self.delta_k));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTrap(problems.join("; ")))
        }
    }

    /// Axial length scale `ℓ` in meters.
    pub fn length_scale(&self) -> f64 {
        (coulomb_strength() / (self.ion_mass * self.omega_z * self.omega_z)).cbrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Axial,
    Transverse,
}

/// Equilibrium positions in units of [`TrapConfig::length_scale`].
#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub scaled: Vec<f64>,
    pub length_scale: f64,
    /// Largest absolute scaled force at the returned positions.
    pub residual: f64,
    pub iterations: usize,
}

impl Equilibrium {
    pub fn positions_m(&self) -> Vec<f64> {
        self.scaled.iter().map(|u| u * self.length_scale).collect()
    }

    pub fn min_spacing_m(&self) -> Option<f64> {
        self.scaled
            .windows(2)
            .map(|w| (w[1] - w[0]) * self.length_scale)
            .min_by(f64::total_cmp)
    }
}

/// Normal modes of one motional branch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeStructure {
    pub branch: Branch,
    pub positions: Vec<f64>,
    pub length_scale: f64,
    /// Angular mode frequencies. Transverse modes are sorted descending (CM first),
    /// axial modes ascending (CM first).
    pub mode_freqs: Vec<f64>,
    /// `b[(i, m)]`: participation of ion `i` in mode `m`; columns are orthonormal.
    pub mode_matrix: DMatrix<f64>,
    /// `η[(i, m)] = b[(i, m)] · Δk · sqrt(ħ / (2 M ω_m))`.
    pub lamb_dicke: DMatrix<f64>,
}

impl ModeStructure {
    /// Builds a mode structure from explicit frequencies and mode vectors, computing the
    /// Lamb-Dicke matrix for the given ion mass and wavevector.
    pub fn from_modes(
        branch: Branch,
        mode_freqs: Vec<f64>,
        mode_matrix: DMatrix<f64>,
        ion_mass: f64,
        delta_k: f64,
    ) -> Result<Self> {
        let n = mode_freqs.len();
        if mode_matrix.nrows() != n || mode_matrix.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "mode matrix is {}x{}, expected {n}x{n}",
                mode_matrix.nrows(),
                mode_matrix.ncols()
            )));
        }
        if mode_freqs.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput("mode frequencies must be positive".into()));
        }
        let lamb_dicke = lamb_dicke_matrix(&mode_matrix, &mode_freqs, ion_mass, delta_k);
        Ok(ModeStructure {
            branch,
            positions: vec![0.0; n],
            length_scale: 0.0,
            mode_freqs,
            mode_matrix,
            lamb_dicke,
        })
    }

    pub fn n_ions(&self) -> usize {
        self.mode_matrix.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.mode_freqs.len()
    }

    /// Copy with every mode frequency shifted by `offset` rad/s and the Lamb-Dicke
    /// couplings left unchanged.
    pub fn with_frequency_offset(&self, offset: f64) -> Self {
        let mut shifted = self.clone();
        for w in &mut shifted.mode_freqs {
            *w += offset;
        }
        shifted
    }
}

fn lamb_dicke_matrix(b: &DMatrix<f64>, freqs: &[f64], ion_mass: f64, delta_k: f64) -> DMatrix<f64> {
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, m| {
        b[(i, m)] * delta_k * (HBAR / (2.0 * ion_mass * freqs[m])).sqrt()
    })
}

/// Scaled net force on each ion: trap restoring force plus Coulomb repulsion.
pub(crate) fn scaled_forces(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let coulomb: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = u[i] - u[j];
                    d.signum() / (d * d)
                })
                .sum();
            coulomb - u[i]
        })
        .collect()
}

fn inverse_cube_sums(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 / (u[i] - u[j]).abs().powi(3) })
}

/// Axial Hessian in units of `ω_z²`.
pub fn axial_hessian(u: &[f64]) -> DMatrix<f64> {
    let inv = inverse_cube_sums(u);
    let n = u.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 + 2.0 * inv.row(i).sum()
        } else {
            -2.0 * inv[(i, j)]
        }
    })
}

/// Transverse Hessian in units of `ω_z²` for anisotropy `β = ω_x / ω_z`.
pub fn transverse_hessian(u: &[f64], anisotropy: f64) -> DMatrix<f64> {
    let inv = inverse_cube_sums(u);
    let n = u.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            anisotropy * anisotropy - inv.row(i).sum()
        } else {
            inv[(i, j)]
        }
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Equilibrium of the chain by damped Newton iteration on the scaled force equations.
pub fn solve_equilibrium(config: &TrapConfig) -> Result<Equilibrium> {
    config.validate()?;
    let n = config.n_ions;
    let length_scale = config.length_scale();
    if n == 1 {
        return Ok(Equilibrium { scaled: vec![0.0], length_scale, residual: 0.0, iterations: 0 });
    }

    let half_span = (n as f64).powf(0.56);
    let mut u: Vec<f64> = (0..n)
        .map(|i| -half_span + 2.0 * half_span * i as f64 / (n - 1) as f64)
        .collect();
    let mut forces = scaled_forces(&u);
    let mut residual = max_abs(&forces);

    for iteration in 0..MAX_NEWTON_ITERATIONS {
        if residual < EQUILIBRIUM_TOLERANCE {
            return Ok(finish(u, length_scale, iteration));
        }
        // The Jacobian of (-force) is the axial Hessian.
        let jac = axial_hessian(&u);
        let rhs = DVector::from_vec(forces.clone());
        let step = jac
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or(Error::EquilibriumNotConverged { iterations: iteration, residual })?;

        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, d)| x + damping * d).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered {
                let trial_forces = scaled_forces(&trial);
                let trial_residual = max_abs(&trial_forces);
                if trial_residual < residual || damping < 1e-6 {
                    u = trial;
                    forces = trial_forces;
                    residual = trial_residual;
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1e-12 {
                return Err(Error::EquilibriumNotConverged { iterations: iteration, residual });
            }
        }
    }
    if residual < EQUILIBRIUM_TOLERANCE {
        Ok(finish(u, length_scale, MAX_NEWTON_ITERATIONS))
    } else {
        Err(Error::EquilibriumNotConverged { iterations: MAX_NEWTON_ITERATIONS, residual })
    }
}

fn finish(mut u: Vec<f64>, length_scale: f64, iterations: usize) -> Equilibrium {
    // Remove the last-ulp asymmetry left by the iteration.
    let n = u.len();
    let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
    u = sym;
    let residual = max_abs(&scaled_forces(&u));
    Equilibrium { scaled: u, length_scale, residual, iterations }
}

/// Normal modes of the requested branch.
pub fn mode_structure(config: &TrapConfig, branch: Branch) -> Result<ModeStructure> {
    let eq = solve_equilibrium(config)?;
    let n = config.n_ions;
    let anisotropy = config.omega_x / config.omega_z;
    let hessian = match branch {
        Branch::Axial => axial_hessian(&eq.scaled),
        Branch::Transverse => transverse_hessian(&eq.scaled, anisotropy),
    };

    let eig = SymmetricEigen::new(hessian);
    let mut order: Vec<usize> = (0..n).collect();
    match branch {
        Branch::Transverse => order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a])),
        Branch::Axial => order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
    }

    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest <= 0.0 {
        // Eigenvalues are β² + c_k with c_k independent of β.
        let critical = (anisotropy * anisotropy - smallest).sqrt();
        return Err(Error::ZigzagInstability { eigenvalue: smallest, critical_anisotropy: critical });
    }

    let mut mode_matrix = DMatrix::zeros(n, n);
    let mut mode_freqs = Vec::with_capacity(n);
    for (m, &k) in order.iter().enumerate() {
        let mut column = eig.eigenvectors.column(k).into_owned();
        canonical_sign(column.as_mut_slice());
        mode_matrix.set_column(m, &column);
        mode_freqs.push(config.omega_z * eig.eigenvalues[k].sqrt());
    }
    if branch == Branch::Transverse {
        // The CM eigenvalue is exactly β²; keep ω_x free of eigensolver rounding.
        let cm = mode_freqs[0];
        if ((cm - config.omega_x) / config.omega_x).abs() < 1e-9 {
            mode_freqs[0] = config.omega_x;
        }
    }

    let lamb_dicke = lamb_dicke_matrix(&mode_matrix, &mode_freqs, config.ion_mass, config.delta_k);
    Ok(ModeStructure {
        branch,
        positions: eq.scaled,
        length_scale: eq.length_scale,
        mode_freqs,
        mode_matrix,
        lamb_dicke,
    })
}

/// Flips the vector so its largest-magnitude entry is positive; near-ties resolve to
/// the lowest index.
fn canonical_sign(v: &mut [f64]) {
    let peak = max_abs(v);
    if peak == 0.0 {
        return;
    }
    let pivot = v.iter().position(|x| x.abs() >= peak * (1.0 - 1e-9)).unwrap_or(0);
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Gate-time scales below which single-mode gates stop resolving the mode spectrum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingAdvisory {
    /// `1 / ω_z`, seconds.
    pub axial_time_scale: f64,
    /// `N^0.86 / ω_x`, seconds.
    pub axial_lower_bound: f64,
    /// `ω_x / ω_z²`, seconds.
    pub transverse_time_scale: f64,
    /// `N^1.72 / ω_x`, seconds.
    pub transverse_lower_bound: f64,
    pub axial_scaling_factor: f64,
    pub transverse_scaling_factor: f64,
}

impl ScalingAdvisory {
    pub fn lines(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("axial single-mode time scale 1/omega_z [s]", self.axial_time_scale),
            ("axial N-scaling bound N^0.86/omega_x [s]", self.axial_lower_bound),
            ("transverse single-mode time scale omega_x/omega_z^2 [s]", self.transverse_time_scale),
            ("transverse N-scaling bound N^1.72/omega_x [s]", self.transverse_lower_bound),
        ]
    }
}

pub fn scaling_advisory(config: &TrapConfig) -> ScalingAdvisory {
    let n = config.n_ions as f64;
    let axial_scaling_factor = n.powf(0.86);
    let transverse_scaling_factor = n.powf(1.72);
    ScalingAdvisory {
        axial_time_scale: 1.0 / config.omega_z,
        axial_lower_bound: axial_scaling_factor / config.omega_x,
        transverse_time_scale: config.omega_x / (config.omega_z * config.omega_z),
        transverse_lower_bound: transverse_scaling_factor / config.omega_x,
        axial_scaling_factor,
        transverse_scaling_factor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::hz_to_angular;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trap(n: usize, fx: f64, fz: f64) -> TrapConfig {
        TrapConfig::ytterbium(n, hz_to_angular(fx), hz_to_angular(fz)).unwrap()
    }

    fn potential(u: &[f64]) -> f64 {
        let mut v: f64 = u.iter().map(|x| 0.5 * x * x).sum();
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                v += 1.0 / (u[i] - u[j]).abs();
            }
        }
        v
    }

    fn transverse_potential(u: &[f64], x: &[f64], beta: f64) -> f64 {
        let mut v: f64 = x.iter().map(|xi| 0.5 * beta * beta * xi * xi).sum();
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                let du = u[i] - u[j];
                let dx = x[i] - x[j];
                v += 1.0 / (du * du + dx * dx).sqrt();
            }
        }
        v
    }

    fn fd_hessian(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> DMatrix<f64> {
        let n = at.len();
        DMatrix::from_fn(n, n, |i, j| {
            let eval = |di: f64, dj: f64| {
                let mut p = at.to_vec();
                p[i] += di;
                p[j] += dj;
                f(&p)
            };
            (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4.0 * h * h)
        })
    }

    #[test]
    fn single_ion_sits_at_center() {
        let eq = solve_equilibrium(&trap(1, 3e6, 4e5)).unwrap();
        assert_eq!(eq.scaled, vec![0.0]);
    }

    #[test]
    fn two_ions_balance_analytically() {
        let eq = solve_equilibrium(&trap(2, 3e6, 4e5)).unwrap();
        let expected = 0.25f64.cbrt();
        assert_relative_eq!(eq.scaled[0], -expected, epsilon = 1e-12);
        assert_relative_eq!(eq.scaled[1], expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 0.629_960_524_947_436_6, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_properties() {
        for n in 1..=20 {
            let eq = solve_equilibrium(&trap(n, 4e6, 3e5)).unwrap();
            assert!(eq.residual < 1e-12, "n={n} residual {}", eq.residual);
            assert!(eq.scaled.windows(2).all(|w| w[1] > w[0]));
            let mean: f64 = eq.scaled.iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-12);
            for i in 0..n {
                assert!((eq.scaled[i] + eq.scaled[n - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fifty_ions_converge() {
        let eq = solve_equilibrium(&trap(50, 20e6, 1e5)).unwrap();
        assert!(eq.residual < 1e-12);
    }

    #[test]
    fn five_yb_ions_are_about_five_microns_apart() {
        let eq = solve_equilibrium(&trap(5, 3e6, 310e3)).unwrap();
        let spacing = eq.min_spacing_m().unwrap();
        assert!((spacing - 5e-6).abs() <= 0.15 * 5e-6, "spacing {spacing}");
    }

    #[test]
    fn random_start_minimisation_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=6 {
            let eq = solve_equilibrium(&trap(n, 4e6, 3e5)).unwrap();
            for _ in 0..50 {
                let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
                u.sort_by(f64::total_cmp);
                let found = minimise_by_descent(u);
                for (a, b) in found.iter().zip(&eq.scaled) {
                    assert!((a - b).abs() < 1e-9, "n={n}: {found:?} vs {:?}", eq.scaled);
                }
            }
        }
    }

    // Backtracking gradient descent on the scaled potential, finished with fixed small
    // steps once function differences drop below rounding.
    fn minimise_by_descent(mut u: Vec<f64>) -> Vec<f64> {
        let n = u.len();
        for w in 1..n {
            if u[w] <= u[w - 1] + 1e-3 {
                u[w] = u[w - 1] + 1e-3;
            }
        }
        let grad = |u: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut g = u[i];
                    for j in 0..n {
                        if j != i {
                            let d = u[i] - u[j];
                            g -= d.signum() / (d * d);
                        }
                    }
                    g
                })
                .collect()
        };
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut step = 0.1;
        for _ in 0..100_000 {
            let g = grad(&u);
            let gnorm = norm(&g);
            if gnorm < 1e-6 {
                break;
            }
            let v0 = potential(&u);
            loop {
                let trial: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
                let ordered = trial.windows(2).all(|w| w[1] > w[0]);
                if ordered && potential(&trial) <= v0 - 0.25 * step * gnorm * gnorm {
                    u = trial;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
        }
        for _ in 0..100_000 {
            let g = grad(&u);
            if norm(&g) < 1e-14 {
                break;
            }
            u.iter_mut().zip(&g).for_each(|(x, gi)| *x -= 0.05 * gi);
        }
        u
    }

    #[test]
    fn hessians_match_finite_differences() {
        for n in [2, 3, 5, 7] {
            let beta = 8.0;
            let eq = solve_equilibrium(&trap(n, 8.0 * 4e5, 4e5)).unwrap();
            let u = eq.scaled.clone();
            let fd_axial = fd_hessian(potential, &u, 1e-3);
            let axial = axial_hessian(&u);
            assert!((fd_axial - &axial).amax() < 1e-5 * axial.amax(), "axial n={n}");

            let zeros = vec![0.0; n];
            let fd_trans = fd_hessian(|x| transverse_potential(&u, x, beta), &zeros, 1e-3);
            let trans = transverse_hessian(&u, beta);
            assert!((fd_trans - &trans).amax() < 1e-5 * trans.amax(), "transverse n={n}");
        }
    }

    #[test]
    fn two_ion_mode_frequencies() {
        let cfg = trap(2, 3e6, 4e5);
        let t = mode_structure(&cfg, Branch::Transverse).unwrap();
        assert_relative_eq!(t.mode_freqs[0], cfg.omega_x, max_relative = 1e-9);
        let rocking = (cfg.omega_x.powi(2) - cfg.omega_z.powi(2)).sqrt();
        assert_relative_eq!(t.mode_freqs[1], rocking, max_relative = 1e-9);

        let a = mode_structure(&cfg, Branch::Axial).unwrap();
        assert_relative_eq!(a.mode_freqs[0], cfg.omega_z, max_relative = 1e-9);
        assert_relative_eq!(a.mode_freqs[1], 3f64.sqrt() * cfg.omega_z, max_relative = 1e-9);
    }

    #[test]
    fn single_ion_mode() {
        let cfg = trap(1, 3e6, 4e5);
        let t = mode_structure(&cfg, Branch::Transverse).unwrap();
        assert_eq!(t.mode_freqs, vec![cfg.omega_x]);
        assert_eq!(t.mode_matrix[(0, 0)], 1.0);
    }

    #[test]
    fn mode_structure_invariants() {
        for n in 1..=8 {
            let cfg = trap(n, 3.5e6, 3e5);
            for branch in [Branch::Transverse, Branch::Axial] {
                let ms = mode_structure(&cfg, branch).unwrap();
                let b = &ms.mode_matrix;
                let gram = b.transpose() * b;
                assert!((gram - DMatrix::identity(n, n)).amax() < 1e-12);
                for i in 0..n {
                    for m in 0..n {
                        let expected = b[(i, m)]
                            * cfg.delta_k
                            * (HBAR / (2.0 * cfg.ion_mass * ms.mode_freqs[m])).sqrt();
                        let got = ms.lamb_dicke[(i, m)];
                        assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
                    }
                }
                for m in 0..n {
                    let col = b.column(m);
                    let peak = col.amax();
                    let pivot = col.iter().position(|x| x.abs() >= peak * (1.0 - 1e-9)).unwrap();
                    assert!(col[pivot] > 0.0);
                }
                if branch == Branch::Transverse {
                    assert_relative_eq!(ms.mode_freqs[0], cfg.omega_x, max_relative = 1e-9);
                    let cm = b.column(0);
                    let uniform = 1.0 / (n as f64).sqrt();
                    assert!(cm.iter().all(|x| (x - uniform).abs() < 1e-9));
                    assert!(ms.mode_freqs.windows(2).all(|w| w[1] < w[0]));
                    assert!(ms.mode_freqs.iter().skip(1).all(|w| *w < cfg.omega_x));

                    let h = transverse_hessian(&ms.positions, cfg.omega_x / cfg.omega_z);
                    let sum_sq: f64 = ms.mode_freqs.iter().map(|w| w * w).sum();
                    assert_relative_eq!(sum_sq, h.trace() * cfg.omega_z.powi(2), max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn zigzag_is_reported() {
        let cfg = trap(10, 1.2e6, 1e6);
        match mode_structure(&cfg, Branch::Transverse) {
            Err(Error::ZigzagInstability { critical_anisotropy, .. }) => {
                assert!(critical_anisotropy > 1.2);
            }
            other => panic!("expected zigzag error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_trap_is_rejected() {
        let err = TrapConfig::ytterbium(3, hz_to_angular(3e5), hz_to_angular(4e5)).unwrap_err();
        assert!(err.to_string().contains("linear-chain regime violated"));
        assert!(TrapConfig::ytterbium(0, 1e7, 1e6).is_err());
    }

    #[test]
    fn advisory_scaling() {
        let one = scaling_advisory(&trap(1, 3e6, 4e5));
        assert_eq!(one.axial_scaling_factor, 1.0);
        assert_eq!(one.transverse_scaling_factor, 1.0);
        assert!(one.axial_time_scale.is_finite() && one.transverse_time_scale.is_finite());

        let cfg5 = trap(5, 3e6, 4e5);
        let five = scaling_advisory(&cfg5);
        assert_relative_eq!(five.transverse_time_scale, cfg5.omega_x / cfg5.omega_z.powi(2));
        assert_relative_eq!(
            five.axial_lower_bound / one.axial_lower_bound,
            5f64.powf(0.86),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            five.transverse_lower_bound / one.transverse_lower_bound,
            5f64.powf(1.72),
            max_relative = 1e-12
        );
    }
}
