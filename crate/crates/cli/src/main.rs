use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod params;
mod report;

use params::{AbstractCycleParams, CommonArgs, DeltaSweepParams, DesignParams, OpticsCycleParams, VerifySltoParams};

/// Runs heat-engine experiments and writes a JSON report.
///
/// Exit codes: 0 all checks passed, 1 a physics check failed, 2 invalid
/// configuration, 3 I/O failure.
#[derive(Parser)]
#[command(name = "qhe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compact two-level engine over one exchange cycle
    AbstractCycle {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: AbstractCycleParams,
    },
    /// Effective Lambda-atom cavity engine
    OpticsCycle {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: OpticsCycleParams,
    },
    /// Full vs effective model over a detuning sweep
    DeltaSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: DeltaSweepParams,
    },
    /// Monte Carlo fit of cavity coupling tables
    Design {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: DesignParams,
    },
    /// Checks a unitary against the semi-local thermal operation conditions
    VerifySlto {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: VerifySltoParams,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        logger.write_style(env_logger::WriteStyle::Never);
    }
    logger.init();

    let outcome = match &cli.command {
        Command::AbstractCycle { common, params } => commands::abstract_cycle(common, params),
        Command::OpticsCycle { common, params } => commands::optics_cycle(common, params),
        Command::DeltaSweep { common, params } => commands::delta_sweep(common, params),
        Command::Design { common, params } => commands::design(common, params),
        Command::VerifySlto { common, params } => commands::verify(common, params),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
