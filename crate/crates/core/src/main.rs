use std::process::ExitCode;

fn main() -> ExitCode {
    limi::cli::main_with_args(std::env::args_os())
}
