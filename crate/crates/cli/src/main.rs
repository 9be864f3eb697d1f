use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hbcli::{load_config, report_trace, run_scenario, validate_config, Mode, Overrides, RunError};

#[derive(Parser)]
#[command(name = "hbctl", version, about = "Backstepping kernels, gains and closed-loop simulations from scenario files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for output files, overriding `[output] dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Kernel grid size, overriding `[kernel] n`.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the kernel equations and write the kernel CSV.
    SolveKernels { config: PathBuf },
    /// Run the full pipeline and write all CSV outputs.
    Simulate { config: PathBuf },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// Summarize a trace CSV.
    Report { trace: PathBuf },
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("{}", e.machine_line());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.grid_n.is_some_and(|n| n < 5) {
        eprintln!("error stage=config kind=InvalidValue message=\"--grid-n must be at least 5\"");
        return ExitCode::from(2);
    }
    let overrides = Overrides {
        out_dir: cli.out_dir.clone(),
        grid_n: cli.grid_n,
    };
    match cli.command {
        Command::SolveKernels { config } => execute(&config, Mode::SolveKernels, &overrides, cli.quiet),
        Command::Simulate { config } => execute(&config, Mode::Simulate, &overrides, cli.quiet),
        Command::Validate { config } => match fs::read_to_string(&config) {
            Ok(text) => {
                let report = validate_config(&text);
                for issue in &report {
                    println!("{}: {issue}", issue.kind());
                }
                if report.is_empty() {
                    if !cli.quiet {
                        println!("ok");
                    }
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(source) => fail(&RunError::Io {
                stage: hbcli::Stage::Config,
                path: config,
                source,
            }),
        },
        Command::Report { trace } => {
            let text = match fs::read_to_string(&trace) {
                Ok(t) => t,
                Err(source) => {
                    return fail(&RunError::Io {
                        stage: hbcli::Stage::Config,
                        path: trace,
                        source,
                    })
                }
            };
            match report_trace(&text) {
                Ok(r) => {
                    print!("{r}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e.into()),
            }
        }
    }
}

fn execute(config: &Path, mode: Mode, overrides: &Overrides, quiet: bool) -> ExitCode {
    let result = load_config(config).and_then(|cfg| run_scenario(&cfg, mode, overrides));
    match result {
        Ok(summary) => {
            if !quiet {
                print!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
