use polyfact::cli;

fn main() {
    let args = match cli::parse_from(std::env::args_os()) {
        Ok(a) => a,
        Err(code) => std::process::exit(code),
    };
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(cli::execute(&args, &mut std::io::stdout().lock()));
}
