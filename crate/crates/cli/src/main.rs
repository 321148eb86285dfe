use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twisted_ep_cli::config::parse_direction;
use twisted_ep_cli::{execute, prepare, run, CliError, Overrides};

#[derive(Parser)]
#[command(name = "twep", version, about = "Twisted exceptional point experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config (or manifest) file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// RK4 steps per period.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for independent evolutions.
    #[arg(long)]
    threads: Option<usize>,
    /// Strength of the σ_z perturbation on qubit 1.
    #[arg(long)]
    epsilon: Option<f64>,
    /// ccw, cw, +1 or -1.
    #[arg(long, value_parser = parse_direction, allow_hyphen_values = true)]
    direction: Option<twisted_ep::dynamics::Direction>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides { steps: f.steps, output_dir: f.output_dir, threads: f.threads, epsilon: f.epsilon, direction: f.direction }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run { config, flags } => execute(&config, &flags.into()).map(|(resolved, artifacts)| {
            for w in &resolved.warnings {
                eprintln!("warning: {w}");
            }
            let dir = resolved.config.output.directory.display();
            for a in artifacts {
                println!("wrote {dir}/{a}");
            }
        }),
        Command::Validate { config, flags } => prepare(&config, &flags.into()).map(|resolved| {
            for w in &resolved.warnings {
                eprintln!("warning: {w}");
            }
            for line in run::describe(&resolved) {
                println!("{line}");
            }
            println!("ok");
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
