use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = ibc_cli::Cli::parse();
    if let Err(e) = ibc_cli::run(&cli) {
        eprintln!("ibc-gaze: {e}");
        std::process::exit(e.exit_code());
    }
}
