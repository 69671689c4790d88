use std::process::ExitCode;

use clap::Parser;

use spheremesh_cli::args::Cli;
use spheremesh_cli::dispatch;

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
