use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    ExitCode::from(derangetropy::cli::run_from_args(std::env::args_os()))
}
