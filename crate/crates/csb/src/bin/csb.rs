use clap::Parser;

fn main() {
    let cli = csb::cli::Cli::parse();
    if let Err(e) = csb::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
