use std::process::ExitCode;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("ROBOSUMM_LOG"))
        .with_writer(std::io::stderr)
        .init();
    robosumm::cli::main()
}
