use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mmse_poincare::{check, config, load, threads_from_env};
use mmse_poincare_core::mc;

#[derive(Parser)]
#[command(
    name = "mmse-poincare",
    version,
    about = "MMSE and Poincare lower-bound sweeps for channels with blockage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a TOML config file or a preset name.
    Run {
        /// Config path, or `fig1` / `fig2`.
        config: String,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; `-` for stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the fast invariant suite; exits nonzero on any failure.
    Check,
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let workers = threads_from_env()?;
    let exec = move |f: Box<dyn FnOnce() -> Result<ExitCode> + Send>| match workers {
        Some(n) => mc::with_workers(n, f),
        None => f(),
    };
    match cli.command {
        Command::Presets => {
            for name in config::PRESETS {
                println!("# preset `{name}`");
                println!("{}", config::preset_text(name).unwrap_or_default().trim());
                println!();
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => exec(Box::new(|| {
            let results = check::run_checks();
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            println!("{} checks, {failed} failed", results.len());
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        })),
        Command::Run {
            config,
            trials,
            seed,
            csv,
            svg,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.set_trials(t)?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let to_stdout = match csv {
                Some(p) if p.as_os_str() == "-" => {
                    cfg.output.csv = None;
                    true
                }
                Some(p) => {
                    cfg.output.csv = Some(p);
                    false
                }
                None => cfg.output.csv.is_none(),
            };
            if svg.is_some() {
                cfg.output.svg = svg;
            }
            exec(Box::new(move || {
                let out = mmse_poincare::run(&cfg)?;
                if to_stdout {
                    std::io::stdout().write_all(out.csv.as_bytes())?;
                }
                for p in [&cfg.output.csv, &cfg.output.svg].into_iter().flatten() {
                    eprintln!("wrote {}", p.display());
                }
                Ok(ExitCode::SUCCESS)
            }))
        }
    }
}
