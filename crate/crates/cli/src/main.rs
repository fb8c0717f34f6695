use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(forcefield_cli::run(std::env::args_os()))
}
