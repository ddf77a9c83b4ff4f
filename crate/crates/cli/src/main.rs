mod args;
mod bench;
mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("POSCERT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sector(a) => commands::sector(a),
        Command::Certify(a) => commands::certify(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
