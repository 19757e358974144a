use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    causal_agent::cli::main_entry()
}
