use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(scenesketch::cli::run(std::env::args_os()))
}
