//! The configuration document read by the command-line tool.
//!
//! Documents are TOML. Frequencies are ordinary frequencies in Hz and times are in
//! seconds; conversion to angular units happens once, in [`validate_config`].
//!
//! ```toml
//! schema_version = 1
//!
//! [trap]
//! n_ions = 2
//! omega_x_hz = 3.0e6
//! omega_z_hz = 4.0e5
//!
//! [design]
//! target_ions = [1, 2]
//! detuning_hz = 2.99e6
//! gate_time_s = 104e-6
//! n_segments = 5
//! ```

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::chain::{mode_structure, Branch, ModeStructure, TrapConfig};
use crate::circuit::{CircuitOp, RegisterState};
use crate::constants::{default_delta_k, hz_to_angular, ATOMIC_MASS_UNIT, YB171_MASS};
use crate::design::{DesignSpec, Solver, DEGENERATE_GUARD_HZ};
use crate::error::{Error, Result};
use crate::fidelity::DEFAULT_DIMENSION_CAP;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_PARITY_POINTS: usize = 64;

/// One problem found in a configuration document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl ConfigIssue {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigIssue { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit: Option<CircuitSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_x_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_z_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_amu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_k_per_m: Option<f64>,
    /// Informational only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubit_splitting_hz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_ions: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal_nbar: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// Redesign at every detuning of the grid.
    Detuning,
    /// Hold the designed amplitudes and shift the detuning.
    DetuningOffset,
    /// Hold the designed amplitudes and shift every mode frequency.
    ModeOffset,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScanKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Vec<VariantSection>>,
}

/// A column of a scan: the design section with some fields replaced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_ions: Option<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    Parity { qubits: Vec<usize> },
    Conditioned { pair: [usize; 2], witness: usize, witness_value: usize },
    Coherence { triple: [usize; 3] },
    /// `R_z(-π/2)` on `middle`, `R(π/2,0)` on every qubit, then the parity of all of them.
    Ghz { middle: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    /// Initial basis state as a bit string, qubit 1 first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Replace ideal XX gates by the channel of the design section's solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<CircuitOp>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Vec<Analysis>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parity_points: Option<usize>,
    /// Samples per segment in the trajectory table; 0 disables it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_samples: Option<usize>,
    /// Cross-check closed forms against quadrature.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension_cap: Option<usize>,
}

// ---------------------------------------------------------------------------------------
// Parsing

const TOP_KEYS: &[&str] = &["schema_version", "trap", "design", "scan", "circuit", "output"];
const TRAP_KEYS: &[&str] = &["n_ions", "omega_x_hz", "omega_z_hz", "mass_amu", "delta_k_per_m", "qubit_splitting_hz"];
const DESIGN_KEYS: &[&str] = &["target_ions", "detuning_hz", "gate_time_s", "n_segments", "solver", "mode_weights", "thermal_nbar"];
const SCAN_KEYS: &[&str] = &["kind", "start_hz", "stop_hz", "points", "variant"];
const VARIANT_KEYS: &[&str] = &["name", "solver", "n_segments", "target_ions"];
const CIRCUIT_KEYS: &[&str] = &["n_qubits", "initial", "noisy", "ops", "analysis"];
const OUTPUT_KEYS: &[&str] = &["parity_points", "trajectory_samples", "oracle", "dimension_cap"];

fn op_keys(tag: &str) -> Option<&'static [&'static str]> {
    match tag {
        "xx" => Some(&["op", "pair", "sign"]),
        "r" => Some(&["op", "theta", "phi", "targets"]),
        "rz" => Some(&["op", "angle", "targets"]),
        _ => None,
    }
}

fn analysis_keys(tag: &str) -> Option<&'static [&'static str]> {
    match tag {
        "parity" => Some(&["kind", "qubits"]),
        "conditioned" => Some(&["kind", "pair", "witness", "witness_value"]),
        "coherence" => Some(&["kind", "triple"]),
        "ghz" => Some(&["kind", "middle"]),
        _ => None,
    }
}

/// Removes keys not in `allowed`, recording each.
fn strip_unknown(table: &mut toml::Table, path: &str, allowed: &[&str], issues: &mut Vec<ConfigIssue>) {
    let unknown: Vec<String> = table.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect();
    for key in unknown {
        issues.push(ConfigIssue::new(join(path, &key), "unknown key"));
        table.remove(&key);
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn section<'a>(table: &'a mut toml::Table, key: &str) -> Option<&'a mut toml::Table> {
    table.get_mut(key).and_then(|v| v.as_table_mut())
}

fn strip_tagged_list(
    table: &mut toml::Table,
    path: &str,
    key: &str,
    tag: &str,
    keys_for: fn(&str) -> Option<&'static [&'static str]>,
    issues: &mut Vec<ConfigIssue>,
) {
    let Some(items) = table.get_mut(key).and_then(|v| v.as_array_mut()) else { return };
    for (k, item) in items.iter_mut().enumerate() {
        let here = format!("{}[{}]", join(path, key), k);
        let Some(t) = item.as_table_mut() else { continue };
        if let Some(allowed) = t.get(tag).and_then(|v| v.as_str()).and_then(keys_for) {
            strip_unknown(t, &here, allowed, issues);
        }
    }
}

/// Parses a document, reporting every unknown key along with the first type error.
pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    match parse_lenient(text)? {
        (doc, issues) if issues.is_empty() => Ok(doc),
        (_, issues) => Err(Error::Config(issues)),
    }
}

/// The document with unknown keys dropped, and the list of those keys.
fn parse_lenient(text: &str) -> Result<(ConfigDocument, Vec<ConfigIssue>)> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![ConfigIssue::new("<document>", e.message().to_string())]))?;
    let mut issues = Vec::new();
    strip_unknown(&mut table, "", TOP_KEYS, &mut issues);
    for (name, keys) in [("trap", TRAP_KEYS), ("design", DESIGN_KEYS), ("scan", SCAN_KEYS), ("circuit", CIRCUIT_KEYS), ("output", OUTPUT_KEYS)] {
        if let Some(t) = section(&mut table, name) {
            strip_unknown(t, name, keys, &mut issues);
        }
    }
    if let Some(scan) = section(&mut table, "scan") {
        if let Some(items) = scan.get_mut("variant").and_then(|v| v.as_array_mut()) {
            for (k, item) in items.iter_mut().enumerate() {
                if let Some(t) = item.as_table_mut() {
                    strip_unknown(t, &format!("scan.variant[{k}]"), VARIANT_KEYS, &mut issues);
                }
            }
        }
    }
    if let Some(circuit) = section(&mut table, "circuit") {
        strip_tagged_list(circuit, "circuit", "ops", "op", op_keys, &mut issues);
        strip_tagged_list(circuit, "circuit", "analysis", "kind", analysis_keys, &mut issues);
    }
    match toml::Value::Table(table).try_into::<ConfigDocument>() {
        Ok(doc) => Ok((doc, issues)),
        Err(e) => {
            issues.push(ConfigIssue::new("<document>", e.message().to_string()));
            Err(Error::Config(issues))
        }
    }
}

pub fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))
}

/// Parses and validates, reporting unknown keys and semantic problems together.
pub fn validate_text(text: &str) -> Result<ValidatedConfig> {
    let (doc, mut issues) = parse_lenient(text)?;
    match validate_config(&doc) {
        Ok(v) if issues.is_empty() => Ok(v),
        Ok(_) => Err(Error::Config(issues)),
        Err(Error::Config(more)) => {
            issues.extend(more);
            Err(Error::Config(issues))
        }
        Err(e) => Err(e),
    }
}

impl ConfigDocument {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration documents always serialize")
    }
}

// ---------------------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug)]
pub struct DesignPlan {
    pub spec: DesignSpec,
    pub solver: Solver,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanVariant {
    pub name: String,
    pub solver: Solver,
    pub n_segments: usize,
    pub target_ions: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct ScanPlan {
    pub kind: ScanKind,
    /// Grid values in Hz: detunings, or offsets for the offset kinds.
    pub grid_hz: Vec<f64>,
    pub variants: Vec<ScanVariant>,
}

#[derive(Clone, Debug)]
pub struct CircuitPlan {
    pub initial: RegisterState,
    pub ops: Vec<CircuitOp>,
    pub noisy: bool,
    pub analyses: Vec<Analysis>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputPlan {
    pub parity_points: usize,
    pub trajectory_samples: usize,
    pub oracle: bool,
    pub dimension_cap: usize,
}

/// A checked document with angular-unit physics objects built from it.
#[derive(Clone, Debug)]
pub struct ValidatedConfig {
    /// The input with every default filled in.
    pub document: ConfigDocument,
    pub trap: Option<TrapConfig>,
    pub modes: Option<ModeStructure>,
    pub design: Option<DesignPlan>,
    pub scan: Option<ScanPlan>,
    pub circuit: Option<CircuitPlan>,
    pub output: OutputPlan,
}

fn default_solver(n_segments: usize, n_modes: usize) -> Solver {
    if n_segments == 1 {
        Solver::Constant
    } else if n_segments > 2 * n_modes {
        Solver::Exact
    } else {
        Solver::Weighted
    }
}

fn required<T: Clone>(value: &Option<T>, path: &str, issues: &mut Vec<ConfigIssue>) -> Option<T> {
    if value.is_none() {
        issues.push(ConfigIssue::new(path, "missing required key"));
    }
    value.clone()
}

fn positive(value: Option<f64>, path: &str, issues: &mut Vec<ConfigIssue>) -> Option<f64> {
    match value {
        Some(x) if x.is_finite() && x > 0.0 => Some(x),
        Some(x) => {
            issues.push(ConfigIssue::new(path, format!("must be finite and positive, got {x}")));
            None
        }
        None => None,
    }
}

fn pair_in(pair: [usize; 2], n: usize, path: &str, issues: &mut Vec<ConfigIssue>) -> Option<(usize, usize)> {
    let [a, b] = pair;
    if a == b || a == 0 || b == 0 || a > n || b > n {
        issues.push(ConfigIssue::new(path, format!("must be two distinct ions in 1..={n}, got [{a}, {b}]")));
        None
    } else {
        Some((a, b))
    }
}

fn validate_trap(doc: &mut ConfigDocument, issues: &mut Vec<ConfigIssue>) -> Option<(TrapConfig, ModeStructure)> {
    let section = doc.trap.as_mut()?;
    let n = required(&section.n_ions, "trap.n_ions", issues);
    if n == Some(0) {
        issues.push(ConfigIssue::new("trap.n_ions", "must be at least 1"));
    }
    let wx = positive(required(&section.omega_x_hz, "trap.omega_x_hz", issues), "trap.omega_x_hz", issues);
    let wz = positive(required(&section.omega_z_hz, "trap.omega_z_hz", issues), "trap.omega_z_hz", issues);
    let mass = positive(Some(*section.mass_amu.get_or_insert(YB171_MASS / ATOMIC_MASS_UNIT)), "trap.mass_amu", issues);
    let dk = positive(Some(*section.delta_k_per_m.get_or_insert(default_delta_k())), "trap.delta_k_per_m", issues);
    positive(section.qubit_splitting_hz, "trap.qubit_splitting_hz", issues);
    if let (Some(x), Some(z)) = (wx, wz) {
        if z >= x {
            issues.push(ConfigIssue::new("trap", format!("linear-chain regime violated: omega_z_hz ({z}) must be below omega_x_hz ({x})")));
            return None;
        }
    }
    let (n, wx, wz, mass, dk) = (n.filter(|&n| n > 0)?, wx?, wz?, mass?, dk?);
    let trap = TrapConfig {
        n_ions: n,
        omega_x: hz_to_angular(wx),
        omega_z: hz_to_angular(wz),
        ion_mass: mass * ATOMIC_MASS_UNIT,
        delta_k: dk,
        label: String::new(),
    };
    match mode_structure(&trap, Branch::Transverse) {
        Ok(modes) => Some((trap, modes)),
        Err(e) => {
            issues.push(ConfigIssue::new("trap", e.to_string()));
            None
        }
    }
}

fn validate_design(doc: &mut ConfigDocument, chain: Option<&(TrapConfig, ModeStructure)>, issues: &mut Vec<ConfigIssue>) -> Option<DesignPlan> {
    let section = doc.design.as_mut()?;
    let Some((trap, modes)) = chain else {
        if doc.trap.is_none() {
            issues.push(ConfigIssue::new("design", "requires a [trap] section"));
        }
        return None;
    };
    let n_ions = modes.n_ions();
    let n_modes = modes.n_modes();
    let targets = required(&section.target_ions, "design.target_ions", issues).and_then(|p| pair_in(p, n_ions, "design.target_ions", issues));
    let mu = required(&section.detuning_hz, "design.detuning_hz", issues);
    if let Some(m) = mu {
        if !m.is_finite() {
            issues.push(ConfigIssue::new("design.detuning_hz", "must be finite"));
        }
    }
    let tau = positive(required(&section.gate_time_s, "design.gate_time_s", issues), "design.gate_time_s", issues);
    let segments = required(&section.n_segments, "design.n_segments", issues);
    if segments == Some(0) {
        issues.push(ConfigIssue::new("design.n_segments", "must be at least 1"));
    }
    let nbar = section.thermal_nbar.get_or_insert_with(|| vec![0.0; n_modes]).clone();
    if nbar.len() != n_modes || nbar.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        issues.push(ConfigIssue::new("design.thermal_nbar", format!("must be {n_modes} non-negative numbers")));
    }
    if let Some(w) = &section.mode_weights {
        if w.len() != n_modes || w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            issues.push(ConfigIssue::new("design.mode_weights", format!("must be {n_modes} positive numbers")));
        }
    }
    let segments = segments.filter(|&s| s > 0)?;
    let solver = *section.solver.get_or_insert(default_solver(segments, n_modes));
    match solver {
        Solver::Exact if segments < 2 * n_modes + 1 => issues.push(ConfigIssue::new(
            "design.n_segments",
            format!("the exact solver needs at least {} segments for {n_modes} modes, got {segments}", 2 * n_modes + 1),
        )),
        Solver::Constant if segments != 1 => issues.push(ConfigIssue::new("design.n_segments", "the constant solver uses exactly 1 segment")),
        _ => {}
    }
    let mut spec = DesignSpec::new(trap.clone(), modes.clone(), targets?, hz_to_angular(mu.filter(|m| m.is_finite())?), tau?, segments);
    spec.thermal_nbar = nbar;
    spec.mode_weights = section.mode_weights.clone();
    spec.validate().ok()?;
    Some(DesignPlan { spec, solver })
}

fn validate_scan(doc: &mut ConfigDocument, design: Option<&DesignPlan>, issues: &mut Vec<ConfigIssue>) -> Option<ScanPlan> {
    let section = doc.scan.as_mut()?;
    let kind = *section.kind.get_or_insert(ScanKind::Detuning);
    let start = required(&section.start_hz, "scan.start_hz", issues);
    let stop = required(&section.stop_hz, "scan.stop_hz", issues);
    let points = required(&section.points, "scan.points", issues);
    for (v, path) in [(start, "scan.start_hz"), (stop, "scan.stop_hz")] {
        if v.is_some_and(|x| !x.is_finite()) {
            issues.push(ConfigIssue::new(path, "must be finite"));
        }
    }
    if let (Some(a), Some(b)) = (start, stop) {
        if b < a {
            issues.push(ConfigIssue::new("scan.stop_hz", format!("must not be below scan.start_hz ({a})")));
        }
    }
    if points == Some(0) {
        issues.push(ConfigIssue::new("scan.points", "scan grid is empty"));
    }
    let design_section = doc.design.clone();
    let Some(plan) = design else {
        if design_section.is_none() {
            issues.push(ConfigIssue::new("scan", "requires a [design] section"));
        }
        return None;
    };
    let n_ions = plan.spec.modes.n_ions();
    let n_modes = plan.spec.modes.n_modes();
    let variants = section.variant.get_or_insert_with(|| vec![VariantSection::default()]);
    let mut out = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (k, v) in variants.iter_mut().enumerate() {
        let path = format!("scan.variant[{k}]");
        let segments = *v.n_segments.get_or_insert(plan.spec.n_segments);
        let solver = *v.solver.get_or_insert(if segments == plan.spec.n_segments { plan.solver } else { default_solver(segments, n_modes) });
        let pair = *v.target_ions.get_or_insert([plan.spec.target_ions.0, plan.spec.target_ions.1]);
        let name = v.name.get_or_insert_with(|| if k == 0 { String::new() } else { format!("v{k}") }).clone();
        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            issues.push(ConfigIssue::new(format!("{path}.name"), "use letters, digits and underscores only"));
        }
        if names.contains(&name) {
            issues.push(ConfigIssue::new(format!("{path}.name"), format!("duplicate variant name {name:?}")));
        }
        names.push(name.clone());
        if segments == 0 {
            issues.push(ConfigIssue::new(format!("{path}.n_segments"), "must be at least 1"));
        }
        match solver {
            Solver::Exact if segments < 2 * n_modes + 1 => issues.push(ConfigIssue::new(format!("{path}.n_segments"), format!("the exact solver needs at least {}", 2 * n_modes + 1))),
            Solver::Constant if segments != 1 => issues.push(ConfigIssue::new(format!("{path}.n_segments"), "the constant solver uses exactly 1 segment")),
            _ => {}
        }
        if let Some(targets) = pair_in(pair, n_ions, &format!("{path}.target_ions"), issues) {
            out.push(ScanVariant { name, solver, n_segments: segments, target_ions: targets });
        }
    }
    let (start, stop, points) = (start?, stop?, points.filter(|&p| p > 0)?);
    let step = if points > 1 { (stop - start) / (points - 1) as f64 } else { 0.0 };
    let mut grid_hz: Vec<f64> = (0..points).map(|k| start + step * k as f64).collect();
    if kind == ScanKind::Detuning {
        let freqs: Vec<f64> = plan.spec.modes.mode_freqs.iter().map(|&w| crate::constants::angular_to_hz(w)).collect();
        grid_hz.retain(|&hz| freqs.iter().all(|&f| (hz - f).abs() >= DEGENERATE_GUARD_HZ));
        if grid_hz.is_empty() {
            issues.push(ConfigIssue::new("scan", "every grid point lies inside the degenerate guard"));
        }
    }
    Some(ScanPlan { kind, grid_hz, variants: out })
}

fn validate_circuit(doc: &mut ConfigDocument, design: Option<&DesignPlan>, issues: &mut Vec<ConfigIssue>) -> Option<CircuitPlan> {
    let section = doc.circuit.as_mut()?;
    let n = required(&section.n_qubits, "circuit.n_qubits", issues)?;
    if n == 0 || n > 10 {
        issues.push(ConfigIssue::new("circuit.n_qubits", format!("must lie in 1..=10, got {n}")));
        return None;
    }
    let initial_bits = section.initial.get_or_insert_with(|| "0".repeat(n)).clone();
    let noisy = *section.noisy.get_or_insert(false);
    let ops = section.ops.get_or_insert_with(Vec::new).clone();
    let analyses = section.analysis.get_or_insert_with(Vec::new).clone();
    let mut ok = true;
    if initial_bits.len() != n || !initial_bits.chars().all(|c| c == '0' || c == '1') {
        issues.push(ConfigIssue::new("circuit.initial", format!("must be a string of {n} bits")));
        ok = false;
    }
    for (k, op) in ops.iter().enumerate() {
        if let Err(e) = op.validate(n) {
            issues.push(ConfigIssue::new(format!("circuit.ops[{k}]"), e.to_string()));
            ok = false;
        }
    }
    let distinct = |q: &[usize]| q.iter().all(|&x| x >= 1 && x <= n) && q.iter().enumerate().all(|(i, x)| !q[..i].contains(x));
    for (k, a) in analyses.iter().enumerate() {
        let path = format!("circuit.analysis[{k}]");
        let good = match a {
            Analysis::Parity { qubits } => !qubits.is_empty() && distinct(qubits),
            Analysis::Conditioned { pair, witness, witness_value } => distinct(&[pair[0], pair[1], *witness]) && *witness_value <= 1,
            Analysis::Coherence { triple } => distinct(triple),
            Analysis::Ghz { middle } => distinct(&[*middle]),
        };
        if !good {
            issues.push(ConfigIssue::new(path, format!("qubits must be distinct and within 1..={n}; witness values are 0 or 1")));
            ok = false;
        }
    }
    if noisy && design.is_none() {
        issues.push(ConfigIssue::new("circuit.noisy", "requires a valid [design] section"));
        ok = false;
    }
    if !ok {
        return None;
    }
    let mut initial = RegisterState::zeros(n);
    initial.amplitudes.swap(0, usize::from_str_radix(&initial_bits, 2).unwrap_or(0));
    Some(CircuitPlan { initial, ops, noisy, analyses })
}

fn validate_output(doc: &mut ConfigDocument, issues: &mut Vec<ConfigIssue>) -> OutputPlan {
    let section = doc.output.get_or_insert_with(OutputSection::default);
    let parity_points = *section.parity_points.get_or_insert(DEFAULT_PARITY_POINTS);
    if parity_points < 8 {
        issues.push(ConfigIssue::new("output.parity_points", format!("must be at least 8, got {parity_points}")));
    }
    OutputPlan {
        parity_points,
        trajectory_samples: *section.trajectory_samples.get_or_insert(0),
        oracle: *section.oracle.get_or_insert(false),
        dimension_cap: *section.dimension_cap.get_or_insert(DEFAULT_DIMENSION_CAP),
    }
}

/// Checks every section, reporting all problems at once, and builds the internal
/// (angular-unit) objects.
pub fn validate_config(doc: &ConfigDocument) -> Result<ValidatedConfig> {
    let mut doc = doc.clone();
    let mut issues = Vec::new();
    match doc.schema_version {
        None => issues.push(ConfigIssue::new("schema_version", "missing required key")),
        Some(SCHEMA_VERSION) => {}
        Some(v) => issues.push(ConfigIssue::new("schema_version", format!("unsupported version {v}; this build reads version {SCHEMA_VERSION}"))),
    }
    if doc.trap.is_none() && doc.circuit.is_none() {
        issues.push(ConfigIssue::new("<document>", "needs a [trap] or a [circuit] section"));
    }
    let chain = validate_trap(&mut doc, &mut issues);
    let design = validate_design(&mut doc, chain.as_ref(), &mut issues);
    let scan = validate_scan(&mut doc, design.as_ref(), &mut issues);
    let circuit = validate_circuit(&mut doc, design.as_ref(), &mut issues);
    let output = validate_output(&mut doc, &mut issues);
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let (trap, modes) = chain.map_or((None, None), |(t, m)| (Some(t), Some(m)));
    Ok(ValidatedConfig { document: doc, trap, modes, design, scan, circuit, output })
}

/// Parses, validates and re-serializes with every default filled in.
pub fn normalize(text: &str) -> Result<String> {
    Ok(validate_text(text)?.document.to_toml())
}
