use std::process::ExitCode;

use clap::Parser;
use reg_core::cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REG_LOG", "warn")).init();
    run(Cli::parse())
}
