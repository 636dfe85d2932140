use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aql_core::schema::parse_schema;
use aql_core::sim::{self, FuzzConfig, Report};
use aql_core::ReplicaId;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aql", version, about = "Run replicated-store scenarios, fuzz schedules and check schemas")]
struct Cli {
    /// Print notes and final replica dumps as well.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a scenario file and print its report.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Replay a seeded random schedule and check every invariant.
    Fuzz {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, default_value_t = 200)]
        events: usize,
        /// Isolate the last replica for most of the run.
        #[arg(long)]
        partition: bool,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Parse and validate a schema file.
    CheckSchema { file: PathBuf },
    /// Run a scenario and print the canonical tables of one replica.
    Dump {
        file: PathBuf,
        /// Replica number; defaults to the first replica of the scenario.
        #[arg(long)]
        replica: Option<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
}

fn read(path: &Path) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn print_report(report: &Report, format: Format, verbose: bool) -> ExitCode {
    match format {
        Format::Human => {
            let mut text = report.human();
            if !verbose && report.passed() {
                // Notes are diagnostics; keep them only when asked or on failure.
                let mut r = report.clone();
                r.notes.clear();
                text = r.human();
            }
            print!("{text}");
        }
        Format::Machine => print!("{}", report.machine()),
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load(file: &Path) -> Result<sim::Scenario, ExitCode> {
    sim::load_scenario(file).map_err(|e| {
        eprintln!("error: {}: {e}", file.display());
        ExitCode::from(2)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode, ExitCode> {
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Run { file, format } => {
            let scenario = load(&file)?;
            let (report, runner) = sim::run_with_state(&scenario).map_err(|e| {
                eprintln!("error: {}: {e}", file.display());
                ExitCode::from(2)
            })?;
            let code = print_report(&report, format, verbose);
            if verbose && format == Format::Human {
                for r in runner.cluster().replicas() {
                    println!("-- {}", r.id);
                    print!("{}", r.store().dump(runner.cluster().catalog()));
                }
            }
            Ok(code)
        }
        Command::Fuzz {
            seed,
            replicas,
            events,
            partition,
            format,
        } => {
            if replicas == 0 {
                eprintln!("error: --replicas must be at least 1");
                return Err(ExitCode::from(2));
            }
            let config = FuzzConfig {
                replicas,
                events,
                forced_partition: partition,
                minimize: true,
            };
            let report = sim::fuzz(seed, &config);
            Ok(print_report(&report, format, verbose))
        }
        Command::CheckSchema { file } => {
            let text = read(&file)?;
            match parse_schema(&text) {
                Ok(catalog) => {
                    print!("{catalog}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("error: {}: {e}", file.display());
                    Err(ExitCode::from(2))
                }
            }
        }
        Command::Dump { file, replica } => {
            let scenario = load(&file)?;
            let replica = match replica {
                Some(n) if scenario.replicas.contains(&ReplicaId(n)) => ReplicaId(n),
                Some(n) => {
                    eprintln!("error: scenario has no replica r{n}");
                    return Err(ExitCode::from(2));
                }
                None => scenario.replicas[0],
            };
            let (_, runner) = sim::run_with_state(&scenario).map_err(|e| {
                eprintln!("error: {}: {e}", file.display());
                ExitCode::from(2)
            })?;
            print!("{}", runner.cluster().replica(replica).store().dump(runner.cluster().catalog()));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    dispatch(cli).unwrap_or_else(|code| code)
}
