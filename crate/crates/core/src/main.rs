use std::io::Write;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("E2BKI_LOG"))
        .format_timestamp(None)
        .init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = e2bki::cli::run(std::env::args_os(), &mut out);
    let _ = out.flush();
    std::process::exit(code);
}
