use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ionshape::config::read_config;
use ionshape::scenario::{self, Command, ScenarioPreset, PRESETS};
use ionshape::{Error, Result};

/// Pulse design and analysis for trapped-ion entangling gates.
#[derive(Parser)]
#[command(name = "ionshape", version)]
struct Cli {
    /// Configuration document (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Cross-check the closed-form integrals against adaptive quadrature.
    #[arg(long, global = true)]
    oracle: bool,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Equilibrium positions, mode frequencies and Lamb-Dicke parameters.
    Modes,
    /// Design one gate.
    Design,
    /// Sweep the detuning, or an offset with the design held fixed.
    Scan,
    /// Analytic, exact and estimator fidelities of a gate.
    Simulate {
        /// Solution document written by `design`; defaults to designing from the config.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Run the circuit section.
    Circuit,
    /// Run a bundled preset, or everything in the config.
    RunScenario {
        #[arg(long)]
        preset: Option<String>,
    },
}

fn config_text(path: Option<&Path>) -> Result<String> {
    let path = path.ok_or_else(|| Error::InvalidInput("--config <path> is required for this command".into()))?;
    read_config(path)
}

fn execute(cli: Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let (text, command, preset) = match cli.command {
        Sub::Modes => (config_text(cli.config.as_deref())?, Command::Modes, None),
        Sub::Design => (config_text(cli.config.as_deref())?, Command::Design, None),
        Sub::Scan => (config_text(cli.config.as_deref())?, Command::Scan, None),
        Sub::Circuit => (config_text(cli.config.as_deref())?, Command::Circuit, None),
        Sub::Simulate { solution } => {
            let doc = solution.as_deref().map(scenario::read_solution).transpose()?;
            (config_text(cli.config.as_deref())?, Command::Simulate(doc), None)
        }
        Sub::RunScenario { preset: Some(name) } => {
            let preset = ScenarioPreset::find(&name)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(preset.name));
            let manifest = scenario::run(preset.config, &Command::All, Some(&preset), cli.oracle, &out)?;
            report(&out, &manifest);
            return Ok(());
        }
        Sub::RunScenario { preset: None } => {
            if cli.config.is_none() {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                return Err(Error::InvalidInput(format!("give --preset <{}> or --config <path>", names.join("|"))));
            }
            (config_text(cli.config.as_deref())?, Command::All, None)
        }
    };
    let manifest = scenario::run(&text, &command, preset, cli.oracle, &out)?;
    report(&out, &manifest);
    Ok(())
}

fn report(out: &Path, manifest: &scenario::Manifest) {
    for f in &manifest.files {
        println!("{}", out.join(&f.name).display());
    }
    println!("{}", out.join(scenario::MANIFEST).display());
    if let Some(check) = &manifest.digest_check {
        println!("expected digests: {check}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
