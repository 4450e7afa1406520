use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use psym_cli::{run_files, Flags};

/// Partial, conditional and exact symmetries of differential equations.
#[derive(Parser, Debug)]
#[command(name = "psym", version)]
struct Args {
    /// Problem files; one report covers all of them.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Human-readable text instead of JSON.
    #[arg(long)]
    pretty: bool,
    /// Default chain length for tasks that do not set max_order.
    #[arg(long, value_name = "N")]
    max_order: Option<u32>,
    /// Also test chain steps on the whole jet space.
    #[arg(long)]
    strong: bool,
    /// Numeric zero-test tolerance.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Seed for numeric sampling and random function realizations.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let a = Args::parse();
    let flags = Flags {
        pretty: a.pretty,
        max_order: a.max_order,
        strong: a.strong,
        tol: a.tol,
        seed: a.seed,
        out: a.out,
    };
    let (text, errors, mut exit) = run_files(&a.files, &flags);
    for e in &errors {
        eprintln!("psym: {e}");
    }
    match &flags.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &text) {
                eprintln!("psym: cannot write {}: {e}", p.display());
                exit = psym_cli::Exit::Error;
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(exit as u8)
}
