use clap::Parser;

fn main() {
    let cli = mtree_cli::Cli::parse();
    if let Err(e) = mtree_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
