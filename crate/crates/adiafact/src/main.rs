use clap::Parser;

fn main() {
    let cli = adiafact::cli::Cli::parse();
    std::process::exit(adiafact::cli::run(cli));
}
