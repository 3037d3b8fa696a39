use clap::Parser;

fn main() {
    let cli = prepsy::cli::Cli::parse();
    std::process::exit(prepsy::cli::execute(cli));
}
