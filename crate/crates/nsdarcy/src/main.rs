use clap::Parser;

fn main() {
    let cli = nsdarcy::cli::Cli::parse();
    std::process::exit(nsdarcy::cli::run(cli));
}
