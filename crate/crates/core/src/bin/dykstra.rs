use std::process::ExitCode;

fn main() -> ExitCode {
    dykstra_net::cli::run_cli()
}
