use std::process::ExitCode;

fn main() -> ExitCode {
    losnav::cli::main_from_args(std::env::args_os())
}
