use clap::Parser;

fn main() {
    let cli = photon_gmrf::cli::Cli::parse();
    if let Err(e) = photon_gmrf::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
