use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = stmix_cli::Cli::parse();
    match stmix_cli::configure_threads().and_then(|_| stmix_cli::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
