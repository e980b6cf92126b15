use std::process::ExitCode;

fn main() -> ExitCode {
    droplet::cli::run()
}
