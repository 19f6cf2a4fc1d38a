use clap::Parser;

fn main() {
    let cli = lpsketch::cli::Cli::parse();
    if let Err(e) = lpsketch::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
