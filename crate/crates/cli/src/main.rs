use clap::Parser;

fn main() {
    let cli = convbsde_cli::Cli::parse();
    std::process::exit(convbsde_cli::run(cli));
}
