use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use difflab::scenario::{resolve_output_dir, run_scenario, validate_config, RunError, Scenario, Suite};

const EXIT_IO: u8 = 1;
const EXIT_GATE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Approximation of one-dimensional diffusions by characteristic-set restrictions.
#[derive(Parser)]
#[command(name = "difflab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print the normalized configuration.
    Validate(Common),
    /// Run every suite.
    Run(Common),
    /// Boundary classification, Mosco certificate and freeze check.
    Mosco(Common),
    /// Simulate chains; write sample paths and the quadratic-variation report.
    Paths(PathsArgs),
    /// Finite-dimensional distributions and modulus of continuity.
    Weakconv(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON (or a manifest.json from an earlier run).
    config: PathBuf,
    /// Overrides mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "DIFFLAB_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PathsArgs {
    #[command(flatten)]
    common: Common,
    /// Paths per family member written to paths_n<k>.csv (overrides mc.sample_paths).
    #[arg(long)]
    sample: Option<usize>,
}

fn load(common: &Common, sample: Option<usize>) -> Result<Scenario, ExitCode> {
    let text = fs::read_to_string(&common.config).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", common.config.display());
        ExitCode::from(EXIT_IO)
    })?;
    let mut raw: Value = serde_json::from_str(&text).map_err(|e| {
        eprintln!("config error: $: not valid JSON: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    if let Some(seed) = common.seed {
        let target = match raw.get_mut("inputs") {
            Some(inner) if inner.is_object() => inner,
            _ => &mut raw,
        };
        if let Some(mc) = target.get_mut("mc").and_then(Value::as_object_mut) {
            mc.insert("seed".into(), Value::from(seed));
        }
    }
    if let Some(k) = sample {
        let target = match raw.get_mut("inputs") {
            Some(inner) if inner.is_object() => inner,
            _ => &mut raw,
        };
        if let Some(mc) = target.get_mut("mc").and_then(Value::as_object_mut) {
            mc.insert("sample_paths".into(), Value::from(k));
        }
    }
    validate_config(&raw).map_err(|e| {
        eprintln!("config error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn execute(sc: &Scenario, suites: &[Suite], out: &Path) -> ExitCode {
    match run_scenario(sc, suites, out, &command_line()) {
        Ok(outcome) => {
            for g in &outcome.gates {
                println!(
                    "{:<9} {}  {}",
                    format!("{:?}", g.suite).to_lowercase(),
                    if g.pass { "PASS" } else { "FAIL" },
                    g.detail
                );
            }
            println!("artifacts in {}", out.display());
            if outcome.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_GATE)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                RunError::Io(_) => EXIT_IO,
                _ => EXIT_NUMERICAL,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, suites): (&Common, &[Suite]) = match &cli.command {
        Command::Validate(c) => {
            return match load(c, None) {
                Ok(sc) => {
                    println!("{}", serde_json::to_string_pretty(&sc.config).expect("config serializes"));
                    ExitCode::SUCCESS
                }
                Err(code) => code,
            };
        }
        Command::Run(c) => (c, &Suite::ALL),
        Command::Mosco(c) => (c, &Suite::MOSCO),
        Command::Paths(p) => (&p.common, &Suite::PATHS),
        Command::Weakconv(c) => (c, &Suite::WEAKCONV),
    };
    let sample = match &cli.command {
        Command::Paths(p) => p.sample,
        _ => None,
    };
    let sc = match load(common, sample) {
        Ok(sc) => sc,
        Err(code) => return code,
    };
    let suites: Vec<Suite> = if matches!(cli.command, Command::Run(_)) && sc.config.mc.is_none() {
        Suite::MOSCO.to_vec()
    } else {
        suites.to_vec()
    };
    if suites.iter().any(|s| matches!(s, Suite::Fdd | Suite::Modulus | Suite::Qv | Suite::Samples))
        && sc.config.mc.is_none()
    {
        eprintln!("config error: mc: required by this subcommand");
        return ExitCode::from(EXIT_CONFIG);
    }
    let out = resolve_output_dir(&sc, common.output_dir.as_deref());
    execute(&sc, &suites, &out)
}
