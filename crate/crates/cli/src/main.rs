mod config;
mod failure;
mod pipeline;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use config::{Cli, RunConfig};
use failure::EXIT_CONFIG;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPISIRD_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let (kind, args) = cli.command.split();
    match RunConfig::resolve(args).and_then(|config| pipeline::run(kind, &config)) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
