use std::path::PathBuf;
use std::process::ExitCode;

use cavity_gate::harness::{
    list_presets, parse_config, preset, run, ExecuteOptions, ExperimentConfig, OutputFormat, RunOverrides,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulate the cavity-mediated two-ion control-phase gate.
#[derive(Parser)]
#[command(name = "cavity-gate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a built-in preset.
    Run(RunArgs),
    /// List built-in presets with their parameters.
    ListPresets,
    /// Check a config without running any dynamics.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset (see list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// Seed for the trajectory solver.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trajectory runs; output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: config value, then $CAVITY_GATE_OUT_DIR, then ./results).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Skip the doubled-Fock-cutoff convergence check.
    #[arg(long)]
    no_fock_check: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

/// Exit code for configs that fail validation.
const EXIT_INVALID: u8 = 2;

fn load(config: Option<&PathBuf>, preset_name: Option<&str>) -> Result<ExperimentConfig, String> {
    match (config, preset_name) {
        (_, Some(name)) => preset(name).map_err(|e| e.to_string()),
        (Some(path), None) => ExperimentConfig::from_path(path).map_err(|e| e.to_string()),
        (None, None) => Err("no config given".into()),
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut config = match load(args.config.as_ref(), args.preset.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let overrides = RunOverrides {
        seed: args.seed,
        threads: args.threads,
        out_dir: args.out_dir,
        format: args.format.map(Into::into),
    };
    for w in overrides.apply(&mut config) {
        eprintln!("warning: {w}");
    }
    let options = ExecuteOptions {
        threads: args.threads,
        fock_check: !args.no_fock_check,
    };
    match run(&config, &options) {
        Ok(artifacts) => {
            for a in &artifacts {
                for w in &a.result.manifest.warnings {
                    eprintln!("warning: {}: {w}", a.result.plan.name);
                }
                println!("{}\t{}", a.data_path.display(), a.manifest_path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_validate(args: ValidateArgs) -> ExitCode {
    let diagnostics = match (&args.config, &args.preset) {
        (_, Some(name)) => match preset(name) {
            Ok(config) => config.validate(),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_INVALID);
            }
        },
        (Some(path), None) => match std::fs::read_to_string(path) {
            Ok(src) => parse_config(&src).1,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_INVALID);
            }
        },
        (None, None) => unreachable!("clap requires a config or a preset"),
    };
    print!("{diagnostics}");
    let n_err = diagnostics.errors().count();
    let n_warn = diagnostics.warnings().count();
    println!("{n_err} error(s), {n_warn} warning(s)");
    if n_err > 0 {
        ExitCode::from(EXIT_INVALID)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::ListPresets => match list_presets() {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Validate(args) => cmd_validate(args),
    }
}
