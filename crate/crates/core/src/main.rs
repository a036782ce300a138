use std::process::ExitCode;

fn main() -> ExitCode {
    tsam::cli::run(std::env::args_os())
}
