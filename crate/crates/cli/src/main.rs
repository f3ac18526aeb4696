use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinqubit_cli::config::{parse_config, validate_config, Scenario, ScenarioConfig};
use spinqubit_cli::{exit, run_scenario, CliError};

#[derive(Parser)]
#[command(name = "spinqubit", version, about = "Driven spin-qubit simulation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration; the shipped preset is used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the Monte-Carlo shot count of the scenario.
    #[arg(long, value_name = "N")]
    shots: Option<usize>,
    /// Only errors are logged.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    RamseyFree(RunArgs),
    FeedbackRamsey(RunArgs),
    LatencySweep(RunArgs),
    Chevron(RunArgs),
    ShiftVsAmplitude(RunArgs),
    Rabi(RunArgs),
    Rb(RunArgs),
    RabiSpectroscopy(RunArgs),
    ResidualPsd(RunArgs),
    SecCompare(RunArgs),
    /// Checks a configuration without running it; with no `--config`,
    /// checks every shipped preset.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Prints the shipped preset of a scenario.
    Preset { scenario: String },
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn load(scenario: Scenario, args: &RunArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.clone(),
                source: e,
            })?;
            parse_config(&text)?
        }
        None => ScenarioConfig::preset(scenario),
    };
    match cfg.scenario {
        Some(s) if s != scenario => {
            return Err(CliError::config(
                "scenario",
                format!("configuration is for {s}, not {scenario}"),
            ))
        }
        _ => cfg.scenario = Some(scenario),
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(shots) = args.shots {
        cfg.override_shots(shots)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<i32, CliError> {
    let cfg = load(scenario, args)?;
    let summary = run_scenario(&cfg)?;
    for r in &summary.runs {
        for c in &r.checks {
            if !args.quiet {
                println!(
                    "{} seed {}: {} = {:.6e} {}",
                    summary.scenario,
                    r.seed,
                    c.name,
                    c.value,
                    if c.pass { "PASS" } else { "FAIL" }
                );
            }
        }
        if let Some(e) = &r.error {
            eprintln!("{} seed {}: {e}", summary.scenario, r.seed);
        }
    }
    Ok(if summary.any_error() {
        exit::RUNTIME_ERROR
    } else if summary.pass {
        exit::PASS
    } else {
        exit::ACCEPTANCE_FAIL
    })
}

fn validate(config: Option<PathBuf>, quiet: bool) -> Result<i32, CliError> {
    match config {
        Some(path) => {
            let cfg = validate_config(&path)?;
            cfg.scenario()?;
            if !quiet {
                println!("{}: ok", path.display());
            }
        }
        None => {
            for s in Scenario::ALL {
                ScenarioConfig::preset(s).validate()?;
                if !quiet {
                    println!("preset {s}: ok");
                }
            }
        }
    }
    Ok(exit::PASS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config, quiet } => {
            init_logging(quiet);
            validate(config, quiet)
        }
        Command::Preset { scenario } => {
            init_logging(false);
            let found = Scenario::ALL.into_iter().find(|s| s.name() == scenario);
            match found {
                Some(s) => {
                    print!("{}", s.preset_toml());
                    Ok(exit::PASS)
                }
                None => Err(CliError::config("scenario", format!("unknown scenario {scenario}"))),
            }
        }
        cmd => {
            let (scenario, args) = match cmd {
                Command::RamseyFree(a) => (Scenario::RamseyFree, a),
                Command::FeedbackRamsey(a) => (Scenario::FeedbackRamsey, a),
                Command::LatencySweep(a) => (Scenario::LatencySweep, a),
                Command::Chevron(a) => (Scenario::Chevron, a),
                Command::ShiftVsAmplitude(a) => (Scenario::ShiftVsAmplitude, a),
                Command::Rabi(a) => (Scenario::Rabi, a),
                Command::Rb(a) => (Scenario::Rb, a),
                Command::RabiSpectroscopy(a) => (Scenario::RabiSpectroscopy, a),
                Command::ResidualPsd(a) => (Scenario::ResidualPsd, a),
                Command::SecCompare(a) => (Scenario::SecCompare, a),
                Command::Validate { .. } | Command::Preset { .. } => unreachable!(),
            };
            init_logging(args.quiet);
            run(scenario, &args)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
