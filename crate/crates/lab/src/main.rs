use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fh_lab::{export_tree, periodic_csv, periodic_table, run_suite, Suite, SuiteConfig};
use fh_workbench::par::Exec;

#[derive(Parser)]
#[command(name = "lab", about = "Run verification suites for O_K[1/x] x| Z acting on T_d x R^n")]
struct Cli {
    /// Run everything on one thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run suites and print (or write) a JSON report
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Repeatable; defaults to the config's list, then to all suites
        #[arg(long = "suite")]
        suites: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Export the ball around the base vertex as DOT
    Tree {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        radius: u32,
        #[arg(long)]
        dot: PathBuf,
    },
    /// Tabulate periodic-point counts as CSV
    Periodic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "max-m")]
        max_m: u32,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Run { config, suites, seed, json } => {
            let mut cfg = SuiteConfig::load(&config)?;
            if !suites.is_empty() {
                cfg.suites = suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let report = run_suite(&cfg, exec)?;
            for s in &report.suites {
                for c in &s.checks {
                    log::info!("{} {}: {} (worst {})", s.suite.name(), c.lemma, if c.pass { "pass" } else { "FAIL" }, c.worst_case);
                }
            }
            let text = report.to_json();
            match json {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(report.pass)
        }
        Command::Tree { config, radius, dot } => {
            let cfg = SuiteConfig::load(&config)?;
            let text = export_tree(&cfg, radius)?;
            std::fs::write(&dot, text).with_context(|| format!("writing {}", dot.display()))?;
            Ok(true)
        }
        Command::Periodic { config, max_m, csv } => {
            let cfg = SuiteConfig::load(&config)?;
            let rows = periodic_table(&cfg, max_m)?;
            std::fs::write(&csv, periodic_csv(&rows)?).with_context(|| format!("writing {}", csv.display()))?;
            Ok(true)
        }
    }
}
