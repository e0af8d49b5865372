use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsfde::cli::{catalog_listing, run_text, validate, RunError};

#[derive(Parser)]
#[command(name = "gsfde", version, about = "Picard solver and estimate checks for G-SFDEs with fading memory")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the `out` key).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// List catalog problems and initial data ids.
    Catalog,
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Catalog => {
            for line in catalog_listing() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => {
            let text = match read(&config) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let diags = validate(&text);
            if diags.is_empty() {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            } else {
                for d in diags {
                    eprintln!("{}: {d}", config.display());
                }
                ExitCode::from(2)
            }
        }
        Command::Run { config, out } => {
            let text = match read(&config) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match run_text(&text, out.as_deref()) {
                Ok(outcome) => {
                    for r in &outcome.reports {
                        let verdict = if r.passed { "pass" } else { "FAIL" };
                        println!("{verdict}  {}: empirical {:e} vs {:e} ({})", r.name, r.empirical, r.theoretical, r.witness);
                    }
                    let files: Vec<String> = outcome.files.iter().map(|p| p.display().to_string()).collect();
                    println!("wrote {}", files.join(", "));
                    if !outcome.passed {
                        eprintln!("bound checks failed; see report.json");
                    }
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(RunError::Config(diags)) => {
                    for d in diags {
                        eprintln!("{}: {d}", config.display());
                    }
                    ExitCode::from(2)
                }
                Err(RunError::Runtime(e)) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
