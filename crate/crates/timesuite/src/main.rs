use std::process::ExitCode;

fn main() -> ExitCode {
    timesuite::cli::run(std::env::args_os())
}
