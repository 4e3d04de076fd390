use clap::Parser;

fn main() {
    let cli = pcsc::cli::Cli::parse();
    if let Err(err) = pcsc::cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}
