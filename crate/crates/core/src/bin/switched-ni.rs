use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switched_ni::scenario::{finish, run_scenario, Overrides, RunMode, Scenario};

/// Simulate and certify switched negative-imaginary systems.
///
/// Exit status: 0 when every certificate passes (or is not falsified),
/// 2 when any certificate fails, 1 on errors.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trajectory (and plot).
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Simulate a scenario, run its checks and write a report.
    Certify {
        scenario: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run the bundled closed-loop decay scenario with all its checks.
    ReproduceFig4 {
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// Output directory (overrides the scenario).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
    /// Integrator step in seconds.
    #[arg(long, value_name = "S")]
    step: Option<f64>,
    /// Tolerance applied to every check.
    #[arg(long, value_name = "T")]
    tol: Option<f64>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            out_dir: f.out,
            no_plot: f.no_plot,
            step: f.step,
            tol: f.tol,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { scenario, flags } => {
            run_scenario(&scenario, RunMode::Simulate, &flags.into())
        }
        Command::Certify { scenario, flags } => {
            run_scenario(&scenario, RunMode::Certify, &flags.into())
        }
        Command::ReproduceFig4 { flags } => {
            let mut s = Scenario::fig4();
            s.apply(&flags.into());
            finish(s.run(RunMode::Certify))
        }
    };
    ExitCode::from(code as u8)
}
