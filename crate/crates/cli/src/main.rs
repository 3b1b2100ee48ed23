use std::process::ExitCode;

fn main() -> ExitCode {
    selftest_cli::run(std::env::args_os())
}
