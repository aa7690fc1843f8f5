//! Report generation, bundled presets and file output.
//!
//! Every command first builds its files in memory; nothing is written unless the whole
//! command succeeds. Each run also writes `manifest.json` with the normalized input,
//! SHA-256 digests of the other files and the wall time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::Instant;

use crate::chain::{scaling_advisory, solve_equilibrium, ModeStructure};
use crate::circuit::{self, CircuitOp, NoisyXx, RegisterDensity};
use crate::config::{validate_text, Analysis, ScanKind, ValidatedConfig, SCHEMA_VERSION};
use crate::constants::{angular_to_hz, hz_to_angular};
use crate::design::{self, GateSolution, Solver};
use crate::drive::{self, PulseShape};
use crate::error::{Error, Result};
use crate::fidelity::{self, ThermalSpec};
use crate::quadrature;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

impl OutputFile {
    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        let mut contents = serde_json::to_vec_pretty(value).expect("report values serialize");
        contents.push(b'\n');
        OutputFile { name: name.to_string(), contents }
    }
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header.iter().map(|h| h.as_ref())).expect("in-memory write");
        Table { writer }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.writer.write_record(cells.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }

    fn finish(self, name: &str) -> OutputFile {
        OutputFile { name: name.to_string(), contents: self.writer.into_inner().expect("in-memory flush") }
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x}")
    }
}

// ---------------------------------------------------------------------------------------
// Chain

#[derive(Serialize)]
struct ChainReport {
    n_ions: usize,
    min_spacing_um: Option<f64>,
    equilibrium_residual: f64,
    newton_iterations: usize,
    advisory: Vec<(&'static str, f64)>,
}

pub fn modes_report(cfg: &ValidatedConfig) -> Result<Vec<OutputFile>> {
    let (Some(trap), Some(modes)) = (&cfg.trap, &cfg.modes) else {
        return Err(Error::InvalidInput("the modes command needs a [trap] section".into()));
    };
    let n = modes.n_ions();
    let mut header = vec!["mode_index".to_string(), "freq_hz".to_string()];
    header.extend((1..=n).map(|i| format!("b_{i}")));
    header.extend((1..=n).map(|i| format!("eta_{i}")));
    let mut table = Table::new(&header);
    for m in 0..modes.n_modes() {
        let mut row = vec![(m + 1).to_string(), num(angular_to_hz(modes.mode_freqs[m]))];
        row.extend((0..n).map(|i| num(modes.mode_matrix[(i, m)])));
        row.extend((0..n).map(|i| num(modes.lamb_dicke[(i, m)])));
        table.row(row);
    }
    let eq = solve_equilibrium(trap)?;
    let mut positions = Table::new(&["ion", "position_um"]);
    for (i, x) in eq.positions_m().iter().enumerate() {
        positions.row([(i + 1).to_string(), num(x * 1e6)]);
    }
    let report = ChainReport {
        n_ions: n,
        min_spacing_um: eq.min_spacing_m().map(|d| d * 1e6),
        equilibrium_residual: eq.residual,
        newton_iterations: eq.iterations,
        advisory: scaling_advisory(trap).lines(),
    };
    Ok(vec![table.finish("modes.csv"), positions.finish("positions.csv"), OutputFile::json("chain.json", &report)])
}

// ---------------------------------------------------------------------------------------
// Design

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub ion: usize,
    pub mode: usize,
    pub re_alpha: f64,
    pub im_alpha: f64,
    pub abs_alpha: f64,
}

/// The file form of a [`GateSolution`], in ordinary-frequency units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub solver: Solver,
    pub target_ions: [usize; 2],
    pub detuning_hz: f64,
    pub gate_time_s: f64,
    pub segments_rabi_hz: Vec<f64>,
    pub chi: f64,
    pub chi_sign: f64,
    pub predicted_fidelity: f64,
    pub peak_rabi_hz: f64,
    pub condition_number: f64,
    pub thermal_nbar: Vec<f64>,
    pub residuals: Vec<Residual>,
}

impl SolutionDocument {
    pub fn from_solution(sol: &GateSolution) -> Self {
        let (a, b) = sol.pulse.target_ions;
        let residuals = [a, b]
            .iter()
            .enumerate()
            .flat_map(|(k, &ion)| {
                sol.residual_alphas.alpha[k].iter().enumerate().map(move |(m, z)| Residual {
                    ion,
                    mode: m + 1,
                    re_alpha: z.re,
                    im_alpha: z.im,
                    abs_alpha: z.norm(),
                })
            })
            .collect();
        SolutionDocument {
            solver: sol.solver,
            target_ions: [a, b],
            detuning_hz: angular_to_hz(sol.pulse.detuning_mu),
            gate_time_s: sol.pulse.gate_time,
            segments_rabi_hz: sol.pulse.segments.iter().map(|&x| angular_to_hz(x)).collect(),
            chi: sol.chi,
            chi_sign: sol.chi_sign,
            predicted_fidelity: sol.predicted_fidelity,
            peak_rabi_hz: angular_to_hz(sol.peak_rabi),
            condition_number: sol.condition_number,
            thermal_nbar: sol.thermal_nbar.clone(),
            residuals,
        }
    }

    pub fn pulse(&self) -> Result<PulseShape> {
        PulseShape::new(
            hz_to_angular(self.detuning_hz),
            self.gate_time_s,
            self.segments_rabi_hz.iter().map(|&x| hz_to_angular(x)).collect(),
            (self.target_ions[0], self.target_ions[1]),
        )
    }
}

pub fn read_solution(path: &Path) -> Result<SolutionDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn design_solution(cfg: &ValidatedConfig) -> Result<GateSolution> {
    let plan = cfg.design.as_ref().ok_or_else(|| Error::InvalidInput("this command needs a [design] section".into()))?;
    design::design(&plan.spec, plan.solver)
}

#[derive(Serialize)]
struct OracleReport {
    max_alpha_difference: f64,
    max_alpha: f64,
    chi_closed_form: f64,
    chi_quadrature: f64,
    chi_relative_difference: f64,
}

fn oracle_report(pulse: &PulseShape, modes: &ModeStructure) -> Result<OracleReport> {
    let closed = drive::alpha_final(pulse, modes)?;
    let numeric = quadrature::alpha_by_quadrature(pulse, modes);
    let max_alpha_difference = (0..2)
        .flat_map(|k| closed.alpha[k].iter().zip(&numeric.alpha[k]).map(|(a, b)| (a - b).norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let chi_closed_form = drive::chi(pulse, modes)?.chi;
    let chi_quadrature = quadrature::chi_by_quadrature(pulse, modes).chi;
    Ok(OracleReport {
        max_alpha_difference,
        max_alpha: closed.max_abs(),
        chi_closed_form,
        chi_quadrature,
        chi_relative_difference: (chi_closed_form - chi_quadrature).abs() / chi_closed_form.abs().max(f64::MIN_POSITIVE),
    })
}

fn solution_files(cfg: &ValidatedConfig, sol: &GateSolution) -> Result<Vec<OutputFile>> {
    let modes = cfg.modes.as_ref().expect("a design implies a trap");
    let mut files = vec![OutputFile::json("solution.json", &SolutionDocument::from_solution(sol))];
    let h = sol.pulse.segment_duration();
    let mut pulse = Table::new(&["segment", "t_start_s", "t_stop_s", "rabi_hz"]);
    for (s, &amp) in sol.pulse.segments.iter().enumerate() {
        pulse.row([(s + 1).to_string(), num(s as f64 * h), num((s + 1) as f64 * h), num(angular_to_hz(amp))]);
    }
    files.push(pulse.finish("pulse.csv"));
    if cfg.output.trajectory_samples > 0 {
        let samples = cfg.output.trajectory_samples * sol.pulse.n_segments() + 1;
        let set = drive::alpha_path(&sol.pulse, modes, samples)?;
        let paths = set.sampled_paths.expect("sampled paths requested");
        let mut table = Table::new(&["ion", "mode", "t_seconds", "re_alpha", "im_alpha"]);
        let ions = [sol.pulse.target_ions.0, sol.pulse.target_ions.1];
        for (k, ion) in ions.iter().enumerate() {
            for (m, path) in paths.alpha[k].iter().enumerate() {
                for (t, z) in paths.times.iter().zip(path) {
                    table.row([ion.to_string(), (m + 1).to_string(), num(*t), num(z.re), num(z.im)]);
                }
            }
        }
        files.push(table.finish("trajectories.csv"));
    }
    if cfg.output.oracle {
        files.push(OutputFile::json("oracle.json", &oracle_report(&sol.pulse, modes)?));
    }
    Ok(files)
}

pub fn design_report(cfg: &ValidatedConfig) -> Result<(GateSolution, Vec<OutputFile>)> {
    let sol = design_solution(cfg)?;
    let files = solution_files(cfg, &sol)?;
    Ok((sol, files))
}

// ---------------------------------------------------------------------------------------
// Simulation

#[derive(Serialize)]
struct FidelityReport {
    analytic: f64,
    exact: f64,
    exact_cutoffs: Vec<usize>,
    exact_leakage: f64,
    exact_converged: bool,
    estimator: f64,
    p00: f64,
    p11: f64,
    parity_contrast: f64,
    chi: f64,
    max_residual_alpha: f64,
}

/// Analytic, exact and estimator fidelities of a pulse, with the parity curve of the
/// resulting two-spin state.
pub fn simulate_report(cfg: &ValidatedConfig, pulse: &PulseShape, thermal: &ThermalSpec) -> Result<Vec<OutputFile>> {
    let modes = cfg.modes.as_ref().ok_or_else(|| Error::InvalidInput("the simulate command needs a [trap] section".into()))?;
    let alphas = drive::alpha_final(pulse, modes)?;
    let chi = drive::chi(pulse, modes)?.chi;
    let analytic = fidelity::bell_fidelity_analytic(&alphas, chi, thermal);
    let exact = fidelity::bell_fidelity_exact(&alphas, chi, thermal)?;
    let rho = fidelity::reduced_spin_after_gate(&alphas, chi, thermal);
    let inputs = fidelity::estimator_inputs(&rho, cfg.output.parity_points)?;
    let grid = fidelity::phase_grid(cfg.output.parity_points);
    let parity = fidelity::parity_scan_density(&rho, &[0, 1], &grid);
    let mut table = Table::new(&["phi_rad", "parity"]);
    for (p, v) in grid.iter().zip(&parity) {
        table.row([num(*p), num(*v)]);
    }
    let report = FidelityReport {
        analytic,
        exact: exact.fidelity,
        exact_cutoffs: exact.cutoffs,
        exact_leakage: exact.leakage,
        exact_converged: exact.converged,
        estimator: inputs.estimate,
        p00: inputs.p00,
        p11: inputs.p11,
        parity_contrast: inputs.contrast,
        chi,
        max_residual_alpha: alphas.max_abs(),
    };
    Ok(vec![table.finish("parity.csv"), OutputFile::json("fidelity_report.json", &report)])
}

// ---------------------------------------------------------------------------------------
// Scans

fn suffix(name: &str) -> String {
    if name.is_empty() {
        String::new()
    } else {
        format!("_{name}")
    }
}

pub fn scan_report(cfg: &ValidatedConfig) -> Result<Vec<OutputFile>> {
    let scan = cfg.scan.as_ref().ok_or_else(|| Error::InvalidInput("the scan command needs a [scan] section".into()))?;
    let plan = cfg.design.as_ref().expect("a scan implies a design");
    if scan.grid_hz.is_empty() {
        return Err(Error::InvalidInput("scan grid is empty".into()));
    }
    let modes = &plan.spec.modes;
    let specs: Vec<_> = scan
        .variants
        .iter()
        .map(|v| {
            let mut spec = plan.spec.clone();
            spec.n_segments = v.n_segments;
            spec.target_ions = v.target_ions;
            (v, spec)
        })
        .collect();
    let grid: Vec<f64> = scan.grid_hz.iter().map(|&hz| hz_to_angular(hz)).collect();
    let first = if scan.kind == ScanKind::Detuning { "mu_hz" } else { "offset_hz" };
    let mut header = vec![first.to_string()];
    for (v, _) in &specs {
        header.push(format!("fidelity{}", suffix(&v.name)));
        if scan.kind == ScanKind::Detuning {
            header.push(format!("peak_rabi_hz{}", suffix(&v.name)));
        }
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (v, spec) in &specs {
        match scan.kind {
            ScanKind::Detuning => {
                let points = design::detuning_scan(spec, v.solver, &grid);
                columns.push(points.iter().map(|p| p.fidelity().unwrap_or(f64::NAN)).collect());
                columns.push(points.iter().map(|p| p.outcome.as_ref().map_or(f64::NAN, |s| angular_to_hz(s.peak_rabi))).collect());
            }
            ScanKind::DetuningOffset | ScanKind::ModeOffset => {
                let sol = design::design(spec, v.solver)?;
                let points = if scan.kind == ScanKind::DetuningOffset {
                    design::robustness_scan(&sol, modes, &grid)?
                } else {
                    design::mode_offset_scan(&sol, modes, &grid)?
                };
                columns.push(points.iter().map(|p| p.fidelity).collect());
            }
        }
    }
    let mut table = Table::new(&header);
    for (k, hz) in scan.grid_hz.iter().enumerate() {
        table.row(std::iter::once(num(*hz)).chain(columns.iter().map(|c| num(c[k]))));
    }
    Ok(vec![table.finish("scan.csv")])
}

// ---------------------------------------------------------------------------------------
// Circuits

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum AnalysisResult {
    Parity { file: String, qubits: Vec<usize>, fit: fidelity::ParityFit },
    Conditioned { file: String, result: ConditionedSummary },
    Coherence { file: String, report: circuit::CoherenceReport },
    Ghz { file: String, middle: usize, ghz_fidelity: f64, fit: fidelity::ParityFit },
}

#[derive(Serialize)]
struct ConditionedSummary {
    pair: (usize, usize),
    witness: usize,
    witness_value: usize,
    probability: f64,
    fit: fidelity::ParityFit,
}

#[derive(Serialize)]
struct CircuitReport {
    n_qubits: usize,
    noisy: bool,
    trace: f64,
    /// Against `(|000⟩ + i|110⟩ + i|011⟩ - |101⟩)/2`, for three-qubit registers.
    two_xx_target_fidelity: Option<f64>,
    analyses: Vec<AnalysisResult>,
}

fn parity_table(name: &str, curve: &circuit::ParityCurve) -> OutputFile {
    let mut table = Table::new(&["phi_rad", "parity"]);
    for (p, v) in curve.phi.iter().zip(&curve.parity) {
        table.row([num(*p), num(*v)]);
    }
    table.finish(name)
}

pub fn circuit_report(cfg: &ValidatedConfig) -> Result<Vec<OutputFile>> {
    let plan = cfg.circuit.as_ref().ok_or_else(|| Error::InvalidInput("the circuit command needs a [circuit] section".into()))?;
    let n = plan.initial.n_qubits;
    let noisy = if plan.noisy {
        let sol = design_solution(cfg)?;
        let kernel = fidelity::branch_kernel(&sol.residual_alphas, sol.chi, &sol.thermal());
        Some(NoisyXx { kernel, sign: sol.chi_sign as i32 })
    } else {
        None
    };
    let state = circuit::apply_density(&plan.ops, &plan.initial.density(), noisy.as_ref())?;
    let points = cfg.output.parity_points;
    let mut files = Vec::new();
    let mut populations = Table::new(&["state", "population"]);
    for (k, p) in state.populations().iter().enumerate() {
        populations.row([circuit::basis_label(k, n), num(*p)]);
    }
    files.push(populations.finish("populations.csv"));
    let mut analyses = Vec::new();
    for (k, analysis) in plan.analyses.iter().enumerate() {
        let index = k + 1;
        match analysis {
            Analysis::Parity { qubits } => {
                let curve = circuit::parity_scan(&state, qubits, points)?;
                let file = format!("parity_{index}.csv");
                files.push(parity_table(&file, &curve));
                analyses.push(AnalysisResult::Parity { file, qubits: qubits.clone(), fit: curve.fit });
            }
            Analysis::Conditioned { pair, witness, witness_value } => {
                let c = circuit::conditioned_parity(&state, (pair[0], pair[1]), *witness, *witness_value, points)?;
                let file = format!("parity_{index}.csv");
                files.push(parity_table(&file, &c.curve));
                analyses.push(AnalysisResult::Conditioned {
                    file,
                    result: ConditionedSummary {
                        pair: c.pair,
                        witness: c.witness,
                        witness_value: c.witness_value,
                        probability: c.probability,
                        fit: c.curve.fit,
                    },
                });
            }
            Analysis::Coherence { triple } => {
                let report = circuit::coherence_report(&state, *triple, points)?;
                let file = format!("coherences_{index}.csv");
                let mut table = Table::new(&["pair_a", "pair_b", "witness", "witness_value", "probability", "counter_rotating", "contrast"]);
                for c in &report.coherences {
                    table.row([
                        c.pair.0.to_string(),
                        c.pair.1.to_string(),
                        c.witness.to_string(),
                        c.witness_value.to_string(),
                        num(c.probability),
                        c.counter_rotating.to_string(),
                        num(c.contrast),
                    ]);
                }
                files.push(table.finish(&file));
                analyses.push(AnalysisResult::Coherence { file, report });
            }
            Analysis::Ghz { middle } => {
                let mut ops = circuit::rz_minus_half_pi(*middle);
                ops.push(CircuitOp::R { theta: std::f64::consts::FRAC_PI_2, phi: 0.0, targets: (1..=n).collect() });
                let cat: RegisterDensity = circuit::apply_density(&ops, &state, None)?;
                let ghz_fidelity = cat.fidelity_with(&circuit::ghz_target(n));
                let curve = circuit::parity_scan(&cat, &(1..=n).collect::<Vec<_>>(), points)?;
                let file = format!("parity_{index}.csv");
                files.push(parity_table(&file, &curve));
                analyses.push(AnalysisResult::Ghz { file, middle: *middle, ghz_fidelity, fit: curve.fit });
            }
        }
    }
    let report = CircuitReport {
        n_qubits: n,
        noisy: noisy.is_some(),
        trace: state.trace(),
        two_xx_target_fidelity: (n == 3).then(|| state.fidelity_with(&circuit::two_xx_target().amplitudes)),
        analyses,
    };
    files.push(OutputFile::json("circuit_report.json", &report));
    Ok(files)
}

// ---------------------------------------------------------------------------------------
// Commands, presets and the manifest

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Modes,
    Design,
    Scan,
    /// Simulate the given solution, or the design section's when `None`.
    Simulate(Option<SolutionDocument>),
    Circuit,
    /// Everything the document describes.
    All,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Modes => "modes",
            Command::Design => "design",
            Command::Scan => "scan",
            Command::Simulate(_) => "simulate",
            Command::Circuit => "circuit",
            Command::All => "run-scenario",
        }
    }
}

pub fn build_outputs(cfg: &ValidatedConfig, command: &Command) -> Result<Vec<OutputFile>> {
    let simulate_designed = |files: &mut Vec<OutputFile>| -> Result<()> {
        let (sol, design_files) = design_report(cfg)?;
        files.extend(design_files);
        files.extend(simulate_report(cfg, &sol.pulse, &sol.thermal())?);
        Ok(())
    };
    let mut files = Vec::new();
    match command {
        Command::Modes => files.extend(modes_report(cfg)?),
        Command::Design => files.extend(design_report(cfg)?.1),
        Command::Scan => files.extend(scan_report(cfg)?),
        Command::Simulate(Some(doc)) => {
            let thermal = ThermalSpec { nbar: doc.thermal_nbar.clone() };
            files.extend(simulate_report(cfg, &doc.pulse()?, &thermal)?);
        }
        Command::Simulate(None) => simulate_designed(&mut files)?,
        Command::Circuit => files.extend(circuit_report(cfg)?),
        Command::All => {
            if cfg.trap.is_some() {
                files.extend(modes_report(cfg)?);
            }
            if cfg.design.is_some() {
                simulate_designed(&mut files)?;
            }
            if cfg.scan.is_some() {
                files.extend(scan_report(cfg)?);
            }
            if cfg.circuit.is_some() {
                files.extend(circuit_report(cfg)?);
            }
        }
    }
    Ok(files)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub config: &'static str,
    /// `sha256sum`-style lines for every output except the manifest.
    pub digests: &'static str,
}

macro_rules! preset {
    ($name:literal) => {
        ScenarioPreset {
            name: $name,
            config: include_str!(concat!("../presets/", $name, ".toml")),
            digests: include_str!(concat!("../presets/", $name, ".sha256")),
        }
    };
}

pub const PRESETS: [ScenarioPreset; 5] =
    [preset!("fig1a_scan"), preset!("fig1b_pulse"), preset!("fig2_scan"), preset!("fig3_robustness"), preset!("fig4_circuit")];

impl ScenarioPreset {
    pub fn find(name: &str) -> Result<ScenarioPreset> {
        PRESETS.iter().copied().find(|p| p.name == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            Error::InvalidInput(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })
    }

    fn expected(&self) -> Vec<(String, String)> {
        self.digests
            .lines()
            .filter_map(|l| l.split_once("  "))
            .map(|(d, n)| (n.trim().to_string(), d.trim().to_string()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub preset: Option<String>,
    pub schema_version: u32,
    pub config_sha256: String,
    pub config: String,
    pub files: Vec<FileDigest>,
    /// `match`, `mismatch` or absent when no expected digests exist.
    pub digest_check: Option<String>,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `sha256sum`-style listing of the files, sorted by name.
pub fn digest_listing(files: &[FileDigest]) -> String {
    let mut sorted: Vec<&FileDigest> = files.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    sorted.iter().map(|f| format!("{}  {}\n", f.sha256, f.name)).collect()
}

/// Writes the files and the manifest. The directory is created if needed; nothing is
/// written when `files` is empty.
pub fn write_outputs(outdir: &Path, files: &[OutputFile], manifest: &Manifest) -> Result<()> {
    if files.is_empty() {
        return Err(Error::InvalidInput("the command produced no output".into()));
    }
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(format!("cannot create {}", outdir.display()), e))?;
    let mut manifest_bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    for (name, bytes) in files.iter().map(|f| (&f.name, &f.contents)).chain(std::iter::once((&MANIFEST.to_string(), &manifest_bytes))) {
        let path = outdir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::Output { path: path.clone(), message: e.to_string() })?;
    }
    Ok(())
}

/// Runs `command` on a configuration text and writes the results to `outdir`.
pub fn run(text: &str, command: &Command, preset: Option<&ScenarioPreset>, force_oracle: bool, outdir: &Path) -> Result<Manifest> {
    let started = Instant::now();
    let mut cfg = validate_text(text)?;
    if force_oracle {
        cfg.output.oracle = true;
        cfg.document.output.get_or_insert_with(Default::default).oracle = Some(true);
    }
    let files = build_outputs(&cfg, command)?;
    let digests: Vec<FileDigest> =
        files.iter().map(|f| FileDigest { name: f.name.clone(), sha256: sha256_hex(&f.contents), bytes: f.contents.len() }).collect();
    let digest_check = preset.map(|p| p.expected()).filter(|e| !e.is_empty()).map(|mut expected| {
        expected.sort();
        let mut got: Vec<(String, String)> = digests.iter().map(|d| (d.name.clone(), d.sha256.clone())).collect();
        got.sort();
        if got == expected { "match" } else { "mismatch" }.to_string()
    });
    let normalized = cfg.document.to_toml();
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        preset: preset.map(|p| p.name.to_string()),
        schema_version: SCHEMA_VERSION,
        config_sha256: sha256_hex(normalized.as_bytes()),
        config: normalized,
        files: digests,
        digest_check,
        wall_time_s: 0.0,
    };
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    write_outputs(outdir, &files, &manifest)?;
    Ok(manifest)
}

pub fn run_scenario(preset: &ScenarioPreset, outdir: &Path) -> Result<Manifest> {
    run(preset.config, &Command::All, Some(preset), false, outdir)
}
