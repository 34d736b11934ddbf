use clap::Parser;
use textcast_cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = execute(cli) {
        eprintln!("textcast: {e}");
        std::process::exit(e.exit_code());
    }
}
