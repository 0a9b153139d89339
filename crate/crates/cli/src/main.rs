use std::io;
use std::process::ExitCode;

use clap::Parser;
use jumplab_cli::{execute, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    let code = execute(&args, &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
