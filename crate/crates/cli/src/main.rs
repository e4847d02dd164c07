use clap::Parser;
use corsem_cli::commands::{run_cli, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run_cli(&cli) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
