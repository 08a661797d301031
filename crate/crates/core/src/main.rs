use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modscat::harness::report::{export_csv, report_from_trace};
use modscat::harness::{oracle_suite, parse_config, run_scenario, OracleConfig, Suite};
use modscat::Error;

/// Exit codes: 0 success, 1 other failure, 2 guard breach, 3 config error, 4 numerical failure.
#[derive(Parser)]
#[command(name = "modscat", version, about = "Modified-scattering simulations for Hartree, Bopp-Podolsky and power NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a scenario and write its trace directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the last complete checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Run the self-checks and print a pass/fail table.
    Oracle {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Add a constant to every kernel multiplier node.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long)]
        json: bool,
    },
    /// Print fitted exponents and bound summaries of a trace directory.
    Report {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Write gamma.csv and profile.csv into a trace directory.
    ExportCsv {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, out, resume } => {
            let cfg = parse_config(&config)?;
            let result = run_scenario(&cfg, out.as_deref(), resume)?;
            let r = &result.report;
            println!("status      {}", result.manifest.status);
            println!("steps       {} (t = {})", r.steps, r.t_final);
            if let Some(f) = r.decay_fit {
                println!("decay slope {:+.6} (reference {:+.1})", f.slope, -(cfg.d as f64) / 2.0);
            }
            if let Some(f) = r.growth_fit {
                println!("growth      {:+.6}", f.slope);
            }
            println!("trace       {}", out.unwrap_or(cfg.output).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { suite, n, perturb, json } => {
            let suite = Suite::parse(&suite).ok_or_else(|| Error::Config {
                line: None,
                msg: format!("unknown suite '{suite}' (all, kernels, gamma, propagator)"),
            })?;
            let report = oracle_suite(suite, &OracleConfig { n, multiplier_perturbation: perturb });
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Report { trace } => {
            print!("{}", report_from_trace(&trace)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportCsv { trace } => {
            for p in export_csv(&trace)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(3);
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
