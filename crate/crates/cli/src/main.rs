use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcprop_cli::config::{default_config, ConfigError, ExperimentConfig};
use qcprop_cli::output::{write_jsonl, write_records, Format};
use qcprop_cli::runner::{run_convergence, run_propagate, run_sweep, Status};
use qcprop_cli::validate::{run_validate, Hooks};

#[derive(Parser)]
#[command(
    name = "qcprop",
    version,
    about = "Quasiclassical coherent-state propagators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One amplitude, compared with the exact oracle.
    Propagate(Common),
    /// Cartesian sweep over the config's axes.
    Sweep(Common),
    /// Weight sweep with a log-log fit of the relative error.
    Convergence(Common),
    /// Module invariants and acceptance checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON). Without it the built-in example runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Overrides the solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Record wall-clock time per point.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn load(&self) -> Result<Option<ExperimentConfig>, ConfigError> {
        let mut config = match &self.config {
            Some(path) => Some(ExperimentConfig::load(path)?),
            None => None,
        };
        if let (Some(c), Some(tol)) = (config.as_mut(), self.tol) {
            c.solver.solver.tol = tol;
        }
        Ok(config)
    }

    fn load_or_default(&self) -> Result<ExperimentConfig, ConfigError> {
        Ok(match self.load()? {
            Some(c) => c,
            None => {
                let mut c = default_config();
                if let Some(tol) = self.tol {
                    c.solver.solver.tol = tol;
                }
                c
            }
        })
    }

    fn sink(&self) -> io::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn fail(code: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error [{code}]: {message}");
    ExitCode::FAILURE
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Propagate(args) => {
            let config = match args.load_or_default() {
                Ok(c) => c,
                Err(e) => return fail(e.code(), e),
            };
            let record = match run_propagate(&config, args.timing) {
                Ok(r) => r,
                Err(e) => return fail(e.code(), e),
            };
            let written = args.sink().and_then(|mut w| {
                write_records(&mut w, std::slice::from_ref(&record), args.format)?;
                w.flush()
            });
            if let Err(e) = written {
                return fail("io", e);
            }
            match record.error {
                Some(e) if record.status == Status::Error => fail(&e.code, e.message),
                _ => ExitCode::SUCCESS,
            }
        }
        Command::Sweep(args) => {
            let config = match args.load_or_default() {
                Ok(c) => c,
                Err(e) => return fail(e.code(), e),
            };
            let records = match run_sweep(&config, args.parallel, args.timing) {
                Ok(r) => r,
                Err(e) => return fail(e.code(), e),
            };
            let written = args.sink().and_then(|mut w| {
                write_records(&mut w, &records, args.format)?;
                w.flush()
            });
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail("io", e),
            }
        }
        Command::Convergence(args) => {
            let config = match args.load_or_default() {
                Ok(c) => c,
                Err(e) => return fail(e.code(), e),
            };
            let report = match run_convergence(&config, args.parallel) {
                Ok(r) => r,
                Err(e) => return fail(e.code(), e),
            };
            let written = args.sink().and_then(|mut w| {
                match args.format {
                    Format::Jsonl => write_jsonl(&mut w, std::slice::from_ref(&report))?,
                    Format::Csv => write_records(&mut w, &report.records, Format::Csv)?,
                }
                w.flush()
            });
            if let Err(e) = written {
                return fail("io", e);
            }
            match report.slope {
                Some(s) => eprintln!("slope {s:.4} over {} points", report.points.len()),
                None => eprintln!("exact family: every error at or below the solver floor"),
            }
            ExitCode::SUCCESS
        }
        Command::Validate(args) => {
            let config = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e.code(), e),
            };
            let report = run_validate(config.as_ref(), &Hooks::default());
            for check in &report.checks {
                let tag = check
                    .criterion
                    .map(|n| format!("criterion {n}"))
                    .unwrap_or_else(|| "module".into());
                eprintln!(
                    "{} {tag}: {} (measured {:.3e}, threshold {:.1e}) {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.measured,
                    check.threshold,
                    check.detail
                );
            }
            if let Err(e) = args.sink().and_then(|mut w| {
                write_jsonl(&mut w, &report.checks)?;
                w.flush()
            }) {
                return fail("io", e);
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn main() -> ExitCode {
    run(Cli::parse())
}
