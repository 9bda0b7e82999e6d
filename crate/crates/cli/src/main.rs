use std::process::ExitCode;

use clap::Parser;
use utep_cli::{dispatch, init_logging, Cli};

fn main() -> ExitCode {
    init_logging();
    ExitCode::from(dispatch(Cli::parse()))
}
