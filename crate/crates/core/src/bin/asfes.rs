use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asfes::cli::{self, CliError, Execution, EXIT_OK, EXIT_VALIDATION};
use asfes::scenario::parse_scenario;

#[derive(Parser)]
#[command(name = "asfes", version, about = "Assignably safe extremum seeking simulator")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Warm up and integrate every run in a scenario, writing CSV traces.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run everything on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Equilibrium, linearization and spectral report for a scenario.
    Analyze {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded randomized property checks.
    Verify {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        trials: usize,
    },
}

fn run(args: Args) -> Result<i32, CliError> {
    match args.command {
        Command::Simulate {
            scenario,
            out,
            serial,
        } => {
            let sc = parse_scenario(&scenario)?;
            let mode = if serial {
                Execution::Serial
            } else {
                Execution::Parallel
            };
            let summary = cli::run_simulate(&sc, &out, mode)?;
            for r in &summary.runs {
                match &r.outcome {
                    Ok(o) => println!(
                        "{} c={} start={}: worst_violation={:.6e} final_h={:.6e} gap={:.6e}",
                        r.kind.name(),
                        r.c,
                        r.start_index,
                        o.report.worst_violation,
                        o.report.final_h,
                        o.report.final_objective_gap
                    ),
                    Err(f) => eprintln!("{} c={} start={}: {}", r.kind.name(), r.c, r.start_index, f.message),
                }
            }
            Ok(summary.exit_code())
        }
        Command::Analyze { scenario, out } => {
            let sc = parse_scenario(&scenario)?;
            let summary = cli::run_analyze(&sc, &out)?;
            for (c, spectral, gap) in &summary.per_c {
                println!("c={c}: spectral checks {}, jacobian fd gap {gap:.3e}", if *spectral { "pass" } else { "FAIL" });
            }
            Ok(summary.exit_code())
        }
        Command::Verify { seed, trials } => {
            let report = cli::run_verify(seed, trials)?;
            print!("{}", report.render());
            if let Some(f) = report.first_failure() {
                eprintln!("first failing property: {}", f.property.name());
                return Ok(cli::EXIT_PROPERTY);
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
