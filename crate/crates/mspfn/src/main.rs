use std::process::ExitCode;

fn main() -> ExitCode {
    mspfn::cli::run()
}
