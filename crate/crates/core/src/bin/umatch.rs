use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match umatch::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(umatch::Error::Config(msg))
            if msg.starts_with("error:") || msg.starts_with("Usage") || msg.contains("\nUsage") =>
        {
            eprint!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().lines().next().unwrap_or_default());
            ExitCode::FAILURE
        }
    }
}
