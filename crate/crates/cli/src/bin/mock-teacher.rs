//! Serves the JSON-lines teacher protocol from an automaton file on the
//! standard streams.

use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pdfa_distill::teacher::remote::serve;
use pdfa_distill::Pdfa;

#[derive(Parser)]
#[command(name = "mock-teacher", about = "Answer string-probability queries from a PDFA file")]
struct Args {
    pdfa: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let pdfa = match std::fs::read_to_string(&args.pdfa)
        .map_err(|e| e.to_string())
        .and_then(|text| Pdfa::from_json(&text).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("mock-teacher: {}: {e}", args.pdfa.display());
            return ExitCode::FAILURE;
        }
    };
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    match serve(&pdfa, stdin, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mock-teacher: {e}");
            ExitCode::FAILURE
        }
    }
}
