use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(spread_ippo::cli::cli_dispatch(std::env::args_os()) as u8)
}
