use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedspa::config::load_config;
use fedspa::runner;

/// Desk-scale simulator for personalized federated learning with sparse masks.
#[derive(Parser)]
#[command(name = "fedspa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Tabulate final accuracy, traffic, FLOPs and rounds-to-accuracy of ledgers.
    Compare {
        #[arg(required = true, num_args = 2..)]
        ledgers: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.7,0.75,0.8")]
        targets: Vec<f64>,
        /// Print CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Print per-layer counts and densities of a binary mask file.
    InspectMask { mask: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn execute(cli: Cli) -> fedspa::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let config = load_config(&config)?;
            for s in runner::run(&config)? {
                match &s.personalized_acc {
                    Some(a) => println!(
                        "{}: personalized accuracy {:.4} ± {:.4}",
                        s.strategy.name(),
                        a.mean,
                        a.std
                    ),
                    None => println!("{}: no evaluation recorded", s.strategy.name()),
                }
            }
            println!("artifacts in {}", runner::output_root(&config).display());
        }
        Command::Compare {
            ledgers,
            targets,
            csv,
        } => {
            let rows = runner::compare_ledgers(&ledgers, &targets)?;
            if csv {
                print!("{}", runner::compare_csv(&rows, &targets));
            } else {
                print!("{}", runner::compare_table(&rows, &targets));
            }
        }
        Command::InspectMask { mask } => print!("{}", runner::inspect_mask(&mask)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
