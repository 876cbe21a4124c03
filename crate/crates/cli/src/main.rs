use clap::Parser;
use gazeintent_cli::args::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GAZEINTENT_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = gazeintent_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
