use clap::Parser;
use lakesim_cli::app::{execute, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    execute(&Cli::parse())
}
