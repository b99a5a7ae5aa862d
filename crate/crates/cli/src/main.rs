use std::process::ExitCode;

fn main() -> ExitCode {
    edgebeam_cli::cli::run(std::env::args_os())
}
