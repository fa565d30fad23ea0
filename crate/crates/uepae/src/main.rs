use std::process::ExitCode;

fn main() -> ExitCode {
    uepae::cli::run()
}
