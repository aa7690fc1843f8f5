//! End-to-end acceptance checks. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use argmin::core::{CostFunction, Executor};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ionshape::chain::{mode_structure, solve_equilibrium, Branch, ModeStructure, TrapConfig};
use ionshape::circuit::{self, RegisterState};
use ionshape::constants::{angular_to_hz, hz_to_angular};
use ionshape::design::{self, DesignSpec, Solver};
use ionshape::drive::{self, PulseShape, TrajectorySet};
use ionshape::fidelity::{self, ThermalSpec};
use ionshape::quadrature;
use ionshape::scenario::PRESETS;
use ionshape::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn trap(n: usize, wx_hz: f64, wz_hz: f64) -> TrapConfig {
    TrapConfig::ytterbium(n, hz_to_angular(wx_hz), hz_to_angular(wz_hz)).unwrap()
}

fn transverse(trap: &TrapConfig) -> ModeStructure {
    mode_structure(trap, Branch::Transverse).unwrap()
}

// ---------------------------------------------------------------------------------------
// 1, 2: two-ion detuning scan

const TAU_2: f64 = 104e-6;

fn two_ion_spec(n_segments: usize) -> DesignSpec {
    let t = trap(2, 3e6, 4e5);
    let modes = transverse(&t);
    DesignSpec::new(t, modes, (1, 2), 0.0, TAU_2, n_segments)
}

fn two_ion_grid(spec: &DesignSpec) -> Vec<f64> {
    design::detuning_grid(&spec.modes, 2.95e6, 3.02e6, 200)
}

fn criterion_1() -> Outcome {
    let spec = two_ion_spec(5);
    let start = Instant::now();
    let grid = two_ion_grid(&spec);
    let points = design::detuning_scan(&spec, Solver::Exact, &grid);
    let elapsed = start.elapsed().as_secs_f64();
    let failures = points.iter().filter(|p| p.fidelity().is_none()).count();
    let worst = points.iter().filter_map(|p| p.fidelity()).fold(1.0, f64::min);
    outcome(
        failures == 0 && worst >= 0.999 && elapsed < 10.0,
        format!("{} points, min F = {worst:.6}, {failures} refused, {elapsed:.2} s", grid.len()),
    )
}

struct NegFidelity<'a> {
    spec: &'a DesignSpec,
}

impl CostFunction for NegFidelity<'_> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, mu_hz: &f64) -> Result<f64, argmin::core::Error> {
        let s = design::design_constant(&self.spec.with_detuning(hz_to_angular(*mu_hz)))?;
        Ok(-s.predicted_fidelity)
    }
}

fn refine_peak(spec: &DesignSpec, lo_hz: f64, hi_hz: f64, guess_hz: f64) -> f64 {
    let solver = GoldenSectionSearch::new(lo_hz, hi_hz).unwrap().with_tolerance(1e-9).unwrap();
    let res = Executor::new(NegFidelity { spec }, solver)
        .configure(|s| s.param(guess_hz).max_iters(200))
        .run()
        .unwrap();
    *res.state().best_param.as_ref().unwrap()
}

fn criterion_2() -> Outcome {
    let spec = two_ion_spec(1);
    let grid = two_ion_grid(&spec);
    let f: Vec<f64> = design::detuning_scan(&spec, Solver::Constant, &grid)
        .iter()
        .map(|p| p.fidelity().unwrap_or(0.0))
        .collect();
    let hz: Vec<f64> = grid.iter().map(|w| angular_to_hz(*w)).collect();
    let mut peaks = Vec::new();
    for k in 1..f.len() - 1 {
        if f[k] > f[k - 1] && f[k] >= f[k + 1] {
            peaks.push(refine_peak(&spec, hz[k - 1], hz[k + 1], hz[k]));
        }
    }
    let modes_hz: Vec<f64> = spec.modes.mode_freqs.iter().map(|w| angular_to_hz(*w)).collect();
    let lowest = modes_hz.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = modes_hz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Between the modes both closure conditions compete; compare spacings outside the band.
    let side = |mu: f64| if mu < lowest { -1 } else if mu > highest { 1 } else { 0 };
    let spacings: Vec<f64> = peaks
        .windows(2)
        .filter(|w| side(w[0]) != 0 && side(w[0]) == side(w[1]))
        .map(|w| (w[1] - w[0]) * TAU_2)
        .collect();
    let pass = !spacings.is_empty() && spacings.iter().all(|s| (s - 1.0).abs() <= 0.05);
    let shown: Vec<String> = spacings.iter().map(|s| format!("{s:.4}")).collect();
    outcome(pass, format!("{} peaks, outer spacings x tau = [{}]", peaks.len(), shown.join(", ")))
}

// ---------------------------------------------------------------------------------------
// 3, 4: five-ion chain

const TAU_5: f64 = 190e-6;
const OPERATING_HZ: f64 = 2.81825e6;

fn five_ion_spec(pair: (usize, usize), n_segments: usize) -> DesignSpec {
    let t = trap(5, 3e6, 4e5);
    let modes = transverse(&t);
    DesignSpec::new(t, modes, pair, hz_to_angular(OPERATING_HZ), TAU_5, n_segments)
}

fn criterion_3() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for pair in [(1, 2), (2, 3)] {
        let spec = five_ion_spec(pair, 9);
        let start = Instant::now();
        let grid = design::detuning_grid(&spec.modes, 2.80e6, 3.01e6, 200);
        let points = design::detuning_scan(&spec, Solver::Weighted, &grid);
        let elapsed = start.elapsed().as_secs_f64();
        let (best_f, best_mu) = points
            .iter()
            .filter_map(|p| p.fidelity().map(|f| (f, p.detuning_mu)))
            .fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
        let at_operating = design::design(&spec, Solver::Weighted).unwrap().predicted_fidelity;
        pass &= best_f > 0.97 && at_operating > 0.97 && elapsed < 60.0;
        parts.push(format!(
            "pair {pair:?}: best F = {best_f:.5} at {:.0} Hz, F({OPERATING_HZ:.0} Hz) = {at_operating:.5}, {elapsed:.2} s",
            angular_to_hz(best_mu)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let spec = five_ion_spec((1, 2), 9);
    let offsets = [-1000.0, 0.0, 1000.0].map(hz_to_angular);
    let drops = |solver: Solver| -> Vec<f64> {
        let solution = design::design(&spec, solver).unwrap();
        let pts = design::robustness_scan(&solution, &spec.modes, &offsets).unwrap();
        vec![100.0 * (pts[1].fidelity - pts[0].fidelity), 100.0 * (pts[1].fidelity - pts[2].fidelity)]
    };
    let constant = drops(Solver::Constant);
    let shaped = drops(Solver::Weighted);
    let pass = constant.iter().all(|d| (d - 15.0).abs() <= 5.0) && shaped.iter().all(|d| *d <= 2.0);
    outcome(
        pass,
        format!(
            "drop in points at -1 kHz / +1 kHz: constant {:.2} / {:.2}, 9 segments {:.3} / {:.3}",
            constant[0], constant[1], shaped[0], shaped[1]
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 5: analytic against exact, closed form against quadrature

fn random_alphas(rng: &mut ChaCha8Rng, n_modes: usize) -> TrajectorySet {
    let mut draw = || Complex64::from_polar(rng.random_range(0.0..=1.0), rng.random_range(0.0..2.0 * PI));
    let a = (0..n_modes).map(|_| draw()).collect();
    let b = (0..n_modes).map(|_| draw()).collect();
    TrajectorySet::from_alphas(a, b)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut worst_fidelity = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..50 {
        let n_modes = rng.random_range(1..=3);
        let alphas = random_alphas(&mut rng, n_modes);
        let chi = rng.random_range(-PI..PI);
        let thermal = ThermalSpec { nbar: (0..n_modes).map(|_| rng.random_range(0.0..=2.0)).collect() };
        let analytic = fidelity::bell_fidelity_analytic(&alphas, chi, &thermal);
        let exact = fidelity::bell_fidelity_exact(&alphas, chi, &thermal).unwrap();
        unconverged += usize::from(!exact.converged);
        worst_fidelity = worst_fidelity.max((analytic - exact.fidelity).abs());
    }

    let mut worst_alpha = 0.0f64;
    let mut worst_chi = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=5);
        let t = trap(n, 3e6, rng.random_range(2e5..5e5));
        let modes = transverse(&t);
        let gate_time = rng.random_range(50e-6..300e-6);
        let s = rng.random_range(1..=11);
        let peak = hz_to_angular(rng.random_range(50e3..400e3));
        let amps = (0..s).map(|_| peak * rng.random_range(-1.0..=1.0)).collect();
        let mu = modes.mode_freqs[rng.random_range(0..n)] + hz_to_angular(rng.random_range(-30e3..30e3));
        let a = rng.random_range(1..=n);
        let b = (a + rng.random_range(0..n - 1)) % n + 1;
        let pulse = PulseShape::new(mu, gate_time, amps, (a, b)).unwrap();

        let closed = drive::alpha_final(&pulse, &modes).unwrap();
        let numeric = quadrature::alpha_by_quadrature(&pulse, &modes);
        let scale = closed.max_abs().max(numeric.max_abs());
        let diff = closed.alpha.iter().flatten().zip(numeric.alpha.iter().flatten()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        worst_alpha = worst_alpha.max(diff / scale);

        let chi_closed = drive::chi(&pulse, &modes).unwrap();
        let chi_numeric = quadrature::chi_by_quadrature(&pulse, &modes);
        let chi_scale = chi_closed.per_mode_chi.iter().map(|c| c.abs()).sum::<f64>();
        worst_chi = worst_chi.max((chi_closed.chi - chi_numeric.chi).abs() / chi_scale);
    }
    outcome(
        worst_fidelity <= 1e-6 && unconverged == 0 && worst_alpha <= 1e-8 && worst_chi <= 1e-8,
        format!(
            "50 instances: max |F_analytic - F_exact| = {worst_fidelity:.2e} ({unconverged} unconverged); \
             20 pulses: max relative alpha error {worst_alpha:.2e}, chi error {worst_chi:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 6, 7: three-qubit circuits

/// `exp(iπ/4 X_a X_b)` on three qubits (qubit 1 most significant), from Kronecker products.
fn xx_dense(a: usize, b: usize) -> DMatrix<Complex64> {
    let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(|v| Complex64::new(v, 0.0)));
    let id = DMatrix::<Complex64>::identity(2, 2);
    let factor = |q: usize| if q == a || q == b { x.clone() } else { id.clone() };
    let xx = factor(1).kronecker(&factor(2)).kronecker(&factor(3));
    let chi = FRAC_PI_2 / 2.0;
    DMatrix::identity(8, 8) * Complex64::new(chi.cos(), 0.0) + xx * Complex64::new(0.0, chi.sin())
}

fn criterion_6() -> Outcome {
    let state = circuit::apply(&circuit::two_xx_circuit(), &RegisterState::zeros(3)).unwrap();
    let h = 0.5;
    let expected = [
        ("000", Complex64::new(h, 0.0)),
        ("110", Complex64::new(0.0, h)),
        ("011", Complex64::new(0.0, h)),
        ("101", Complex64::new(-h, 0.0)),
    ];
    let mut listed = DVector::<Complex64>::zeros(8);
    for (bits, amp) in expected {
        listed[usize::from_str_radix(bits, 2).unwrap()] = amp;
    }
    let mut initial = DVector::<Complex64>::zeros(8);
    initial[0] = Complex64::new(1.0, 0.0);
    let dense = xx_dense(2, 3) * xx_dense(1, 2) * initial;
    let got = DVector::from_vec(state.amplitudes.clone());
    let amp_error = (&got - &listed).camax().max((&dense - &listed).camax());

    let rho = state.density();
    let w0 = circuit::conditioned_parity(&rho, (1, 2), 3, 0, 64).unwrap();
    let w1 = circuit::conditioned_parity(&rho, (1, 2), 3, 1, 64).unwrap();
    let close = |p: Option<f64>, want: f64| p.is_some_and(|p| (p - want).abs() < 1e-12);
    let period = |p: Option<f64>| p.map_or("flat".to_string(), |p| format!("{:.4}pi", p / PI));
    outcome(
        amp_error <= 1e-12 && close(w0.curve.fit.period, PI) && close(w1.curve.fit.period, 2.0 * PI),
        format!(
            "amplitude error {amp_error:.1e}; conditioned period witness 0: {} (want 1pi), witness 1: {} (want 2pi, contrast {:.1e})",
            period(w0.curve.fit.period),
            period(w1.curve.fit.period),
            w1.curve.fit.contrast
        ),
    )
}

fn criterion_7() -> Outcome {
    let state = circuit::apply(&circuit::two_xx_circuit(), &RegisterState::zeros(3)).unwrap();
    let ghz = circuit::ghz_transform(&state, 2).unwrap();
    let infidelity = 1.0 - ghz.fidelity_with(&circuit::ghz_target(3));
    let curve = circuit::parity_scan(&ghz.density(), &[1, 2, 3], 64).unwrap();
    let period_ok = curve.fit.period.is_some_and(|p| (p - 2.0 * PI / 3.0).abs() < 1e-12);
    let contrast_ok = (curve.fit.contrast - 1.0).abs() < 1e-9;
    outcome(
        infidelity.abs() < 1e-10 && period_ok && contrast_ok,
        format!(
            "1 - F = {infidelity:.1e}, parity harmonic {} contrast {:.12}",
            curve.fit.harmonic, curve.fit.contrast
        ),
    )
}

// ---------------------------------------------------------------------------------------
// 8: mode structure

fn criterion_8() -> Outcome {
    let (wx, wz) = (3e6, 4e5);
    let t = trap(2, wx, wz);
    let mut tr: Vec<f64> = transverse(&t).mode_freqs.iter().map(|w| angular_to_hz(*w)).collect();
    let mut ax: Vec<f64> = mode_structure(&t, Branch::Axial).unwrap().mode_freqs.iter().map(|w| angular_to_hz(*w)).collect();
    tr.sort_by(f64::total_cmp);
    ax.sort_by(f64::total_cmp);
    let want_tr = [(wx * wx - wz * wz).sqrt(), wx];
    let want_ax = [wz, 3f64.sqrt() * wz];
    let rel = tr.iter().zip(&want_tr).chain(ax.iter().zip(&want_ax)).map(|(g, w)| (g - w).abs() / w).fold(0.0, f64::max);

    let eq = solve_equilibrium(&trap(5, 3e6, 310e3)).unwrap();
    let min_um = eq.min_spacing_m().unwrap() * 1e6;
    outcome(
        rel <= 1e-9 && (min_um / 5.0 - 1.0).abs() <= 0.15,
        format!("two-ion mode frequencies max relative error {rel:.1e}; five-ion minimum spacing {min_um:.3} um"),
    )
}

// ---------------------------------------------------------------------------------------
// 9: determinism of the bundled scenarios

fn run_preset(name: &str, out: &Path) -> bool {
    let status = Command::new(env!("CARGO_BIN_EXE_ionshape"))
        .args(["run-scenario", "--preset", name, "--out"])
        .arg(out)
        .output()
        .unwrap();
    status.status.success() && String::from_utf8_lossy(&status.stdout).contains("expected digests: match")
}

fn manifest_without_timing(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    for preset in PRESETS.iter() {
        let (a, b) = (root.path().join(format!("{}_a", preset.name)), root.path().join(format!("{}_b", preset.name)));
        if !(run_preset(preset.name, &a) && run_preset(preset.name, &b)) {
            mismatches.push(format!("{}: run failed or digests differ from the bundled list", preset.name));
            continue;
        }
        let mut names: Vec<String> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        for name in names.iter().filter(|n| *n != "manifest.json") {
            if std::fs::read(a.join(name)).unwrap() != std::fs::read(b.join(name)).unwrap() {
                mismatches.push(format!("{}/{name}", preset.name));
            }
        }
        if manifest_without_timing(&a) != manifest_without_timing(&b) {
            mismatches.push(format!("{}/manifest.json", preset.name));
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{} presets rerun byte-identical and match their digest lists", PRESETS.len())
    } else {
        mismatches.join(", ")
    };
    outcome(mismatches.is_empty(), detail)
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "two-ion 5-segment scan", criterion_1),
        (2, "constant-pulse peak spacing", criterion_2),
        (3, "five-ion operating point", criterion_3),
        (4, "detuning robustness", criterion_4),
        (5, "oracle agreement", criterion_5),
        (6, "two-gate circuit", criterion_6),
        (7, "GHZ conversion", criterion_7),
        (8, "mode structure", criterion_8),
        (9, "scenario determinism", criterion_9),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += usize::from(!result.pass);
        println!("criterion {k} {} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    println!("acceptance: {} of 9 passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
