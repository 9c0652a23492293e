use std::process::ExitCode;

fn main() -> ExitCode {
    bnsa::cli::main_entry()
}
