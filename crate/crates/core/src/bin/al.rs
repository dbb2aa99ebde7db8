use std::process::ExitCode;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "al_core=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match al_core::cli::main_with_args(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("al: {e}");
            ExitCode::FAILURE
        }
    }
}
