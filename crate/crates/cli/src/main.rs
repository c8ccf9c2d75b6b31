use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MMFLOWS_LOG", "warn"))
        .format_timestamp(None)
        .init();
    ExitCode::from(mmflows_cli::cli::main_with_args(std::env::args_os()) as u8)
}
