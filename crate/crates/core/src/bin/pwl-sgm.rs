use clap::Parser;

fn main() {
    let cli = pwl_sgm::cli::Cli::parse();
    if let Err(e) = pwl_sgm::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
