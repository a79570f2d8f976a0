use std::process::ExitCode;

use clap::Parser;
use env_logger::Env;

use pdfa_distill_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::new().filter_or("PDFA_DISTILL_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
