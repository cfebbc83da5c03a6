use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = safeplan_cli::Cli::parse();
    match safeplan_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
