use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rpmd::commands::{analyze_command, run_command, selftest_command, RunArgs, SelftestOptions};

#[derive(Parser)]
#[command(name = "rpmd", version, about = "Constrained ring-polymer dynamics with trigonometric integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its energy trace and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace path (default: the config's `output`, else trace.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print drift, noise and energy-error metrics of one or more traces.
    Analyze {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the fast invariant checks.
    Selftest {
        /// Flip the sign of the propagator's C block (negative control).
        #[arg(long, hide = true)]
        inject_chat_sign_error: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let result = match cli.command {
        Command::Run { config, out, seed } => run_command(&RunArgs { config, out, seed }, &mut stdout),
        Command::Analyze { traces, csv } => analyze_command(&traces, csv.as_deref(), &mut stdout),
        Command::Selftest { inject_chat_sign_error } => {
            Ok(selftest_command(&SelftestOptions { inject_chat_sign_error }, &mut stdout))
        }
    };
    let status = match result {
        Ok(status) => status,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_status()
        }
    };
    ExitCode::from(status as u8)
}
