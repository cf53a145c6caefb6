use std::process::ExitCode;

fn main() -> ExitCode {
    cvdqs::cli::main()
}
