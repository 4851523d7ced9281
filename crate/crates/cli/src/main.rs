use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symctl::composite::build_composite;
use symctl_cli::output::{sweep, sweep_table};
use symctl_cli::{default_out_dir, resolve_scenario, run_scenario, write_composite, CliError};

#[derive(Parser)]
#[command(name = "symctl", version, about = "Simulate symbiotic fixed-gain/adaptive control scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: nominal plus every comparison, with CSVs, metrics and a plot script.
    Run {
        /// Preset name (parametric-fig2, nonparametric-fig3) or config file.
        #[arg(long)]
        scenario: String,
        /// Output directory [default: $SYMCTL_OUT or ./symctl-out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record every integration step instead of every record_stride steps.
        #[arg(long)]
        full_rate: bool,
    },
    /// Re-run one controller of a scenario over several fixed-gain parameters.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Comma-separated, at least two values.
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        /// Run to sweep [default: first run with a fixed-gain parameter]
        #[arg(long)]
        label: Option<String>,
        /// Also write <scenario>_sweep.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a composite function and write a plot script for it.
    Composite {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file without running it.
    Validate {
        #[arg(long)]
        config: String,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, out, full_rate } => {
            let mut sc = resolve_scenario(&scenario)?;
            if full_rate {
                sc.config.record_stride = 1;
            }
            let out = out.unwrap_or_else(default_out_dir);
            let records = run_scenario(&sc, &out)?;
            println!("{:<28} {:>12} {:>12} {:>12} {:>8}", "label", "ise", "sup_err", "effort", "seconds");
            for r in &records {
                match (&r.metrics, &r.error) {
                    (Some(m), _) => println!(
                        "{:<28} {:>12.5e} {:>12.5e} {:>12.5e} {:>8.2}",
                        r.label, m.ise, m.sup_err, m.control_effort, r.seconds
                    ),
                    (None, Some(e)) => println!("{:<28} {e}", r.label),
                    (None, None) => println!("{:<28} (no nominal reference)", r.label),
                }
            }
            println!("wrote {}", out.display());
            let diverged: Vec<&str> = records.iter().filter(|r| r.diverged()).map(|r| r.label.as_str()).collect();
            if diverged.is_empty() {
                Ok(())
            } else {
                Err(CliError::Diverged(format!("diverged runs: {}", diverged.join(", "))))
            }
        }
        Command::Sweep { scenario, alphas, label, out } => {
            let sc = resolve_scenario(&scenario)?;
            let (label, rows) = sweep(&sc, label.as_deref(), &alphas)?;
            let table = sweep_table(&rows);
            println!("# {} / {label}", sc.name);
            print!("{table}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join(format!("{}_sweep.csv", sc.name)), &table)?;
            }
            if rows.iter().any(|r| r.outcome.is_err()) {
                Err(CliError::Diverged("some sweep runs diverged".into()))
            } else {
                Ok(())
            }
        }
        Command::Composite { a, b, rho, out } => {
            let f = build_composite(a, b, rho).map_err(|e| CliError::Validation(e.to_string()))?;
            let (csv, script) = write_composite(&f, &out.unwrap_or_else(default_out_dir))?;
            println!("wrote {} and {}", csv.display(), script.display());
            Ok(())
        }
        Command::Validate { config } => {
            let sc = resolve_scenario(&config)?;
            println!("{}: ok ({} runs including nominal)", sc.name, sc.comparisons.len() + 1);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("symctl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
