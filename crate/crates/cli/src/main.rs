//! `kslab`: experiments on the critical Keller–Segel system as subcommands.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kslab::KsError;

use commands::{
    CheckParams, ConstantsParams, CriticalMassParams, EvolveParams, MassCurveParams, Outcome, SuiteParams,
};
use config::Params;

const AFTER_HELP: &str = "\
Configuration:
  --config FILE takes a JSON object whose keys are the flag names of the
  subcommand (\"gamma-min\" for --gamma-min), optionally with a \"command\"
  key naming the subcommand. Flags override the file; unknown keys are
  rejected. The resolved configuration is written to OUTPUT_DIR/config.json
  and can be passed back with --config to repeat the run.

Exit codes:
  0  success
  1  I/O failure
  2  configuration error
  3  numerical failure (no first zero, NaN, negative overshoot, ...)
  4  acceptance failure in `suite`";

#[derive(Debug, Parser)]
#[command(name = "kslab", version, about, after_help = AFTER_HELP)]
struct Cli {
    /// Directory receiving every output file.
    #[arg(long, global = true, env = "KSLAB_OUTPUT_DIR", default_value = "kslab-out")]
    output_dir: PathBuf,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    MassCurve(MassCurveParams),
    CriticalMass(CriticalMassParams),
    Constants(ConstantsParams),
    Evolve(Box<EvolveParams>),
    Check(CheckParams),
    Suite(SuiteParams),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::AcceptanceFailure) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<Outcome> {
    let file = cli.config.as_deref();
    let out = cli.output_dir.as_path();
    match &cli.command {
        Command::MassCurve(p) => execute(p, file, out, MassCurveParams::execute),
        Command::CriticalMass(p) => execute(p, file, out, CriticalMassParams::execute),
        Command::Constants(p) => execute(p, file, out, ConstantsParams::execute),
        Command::Evolve(p) => execute(p.as_ref(), file, out, EvolveParams::execute),
        Command::Check(p) => execute(p, file, out, CheckParams::execute),
        Command::Suite(p) => execute(p, file, out, SuiteParams::execute),
    }
}

fn execute<P: Params>(
    flags: &P,
    file: Option<&Path>,
    out: &Path,
    body: fn(&P, &Path) -> anyhow::Result<Outcome>,
) -> anyhow::Result<Outcome> {
    let params = config::merge(flags, file)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    config::echo(&params, out)?;
    body(&params, out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<KsError>()) {
        Some(KsError::Config(_) | KsError::Parse(_) | KsError::Domain(_)) => 2,
        Some(KsError::Io(_)) | None => 1,
        Some(_) => 3,
    }
}
