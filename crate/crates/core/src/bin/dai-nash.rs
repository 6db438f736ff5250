use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dai_nash::harness::run::{oracle, scenario_constants};
use dai_nash::harness::{preset, run_scenario, sweep, sweep_csv, write_outputs, ScenarioConfig, PRESET_NAMES};
use dai_nash::{Error, Parallelism};

/// Distributed adaptive Nash equilibrium seeking.
#[derive(Parser)]
#[command(name = "dai-nash", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML config (or a preset name).
    Run { config: String },
    /// Run a preset, or print its config with --emit-config.
    Preset {
        name: String,
        #[arg(long)]
        emit_config: bool,
    },
    /// Run one scenario per value of a numeric config field.
    Sweep {
        config: String,
        /// Dotted field path, e.g. `dai.gamma` or `integrator.step`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long)]
        sequential: bool,
    },
    /// Print the equilibrium oracle result and game constants.
    Oracle { config: String },
}

fn load(arg: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(arg);
    if path.exists() {
        ScenarioConfig::from_path(path)
    } else if PRESET_NAMES.contains(&arg) {
        preset(arg)
    } else {
        Err(Error::Io(format!("{arg}: no such config file or preset")))
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Divergence { .. } => 3,
        _ => 1,
    }
}

fn run(config: &ScenarioConfig) -> Result<u8, Error> {
    config.validate()?;
    if config.flow.is_experimental() {
        eprintln!("warning: flow `{}` is experimental and carries no convergence guarantee", config.flow);
    }
    let out = run_scenario(config)?;
    let (csv, json) = write_outputs(&out, &config.output_dir())?;
    println!("{}", serde_json::to_string_pretty(&out.summary).map_err(|e| Error::Io(e.to_string()))?);
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(out.summary.status.exit_code() as u8)
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config } => run(&load(&config)?),
        Command::Preset { name, emit_config } => {
            let config = preset(&name).map_err(|e| Error::Config { path: "preset".into(), message: e.to_string() })?;
            if emit_config {
                print!("{}", config.to_toml()?);
                Ok(0)
            } else {
                run(&config)
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            sequential,
        } => {
            let config = load(&config)?;
            config.validate()?;
            let mode = if sequential { Parallelism::Sequential } else { Parallelism::Parallel };
            let rows = sweep(&config, &axis, &values, mode)?;
            let table = sweep_csv(&rows);
            let dir = config.output_dir();
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.sweep.csv", config.name));
            std::fs::write(&path, &table)?;
            print!("{table}");
            eprintln!("wrote {}", path.display());
            Ok(0)
        }
        Command::Oracle { config } => {
            let config = load(&config)?;
            let scenario = config.build()?;
            let constants = scenario_constants(&config, &scenario)?;
            let result = oracle(&config, &scenario, &constants)?;
            let report = serde_json::json!({ "oracle": result, "constants": constants });
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
