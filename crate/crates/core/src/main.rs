use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(volterra_paa::cli::run(std::env::args_os()))
}
