use clap::Parser;

fn main() {
    let cli = qthermo_cli::Cli::parse();
    std::process::exit(qthermo_cli::execute(&cli));
}
