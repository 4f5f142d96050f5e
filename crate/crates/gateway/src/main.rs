use clap::Parser;

fn main() {
    std::process::exit(polygate_gateway::cli::run(polygate_gateway::cli::Cli::parse()));
}
