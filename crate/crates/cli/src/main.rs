use clap::Parser;

fn main() {
    let cli = ctodom::Cli::parse();
    if let Err(e) = ctodom::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
