use clap::Parser;

use seqsr::pipeline::cli;

fn main() {
    let args = cli::Cli::parse();
    match cli::run(args) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("seqsr: {err}");
            std::process::exit(2);
        }
    }
}
