use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;

use kgcl_cli::cli::Cli;
use kgcl_cli::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout();
    let result = commands::run(cli, &mut input, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
