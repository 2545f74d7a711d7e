use clap::Parser;

use anonset::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((report, code)) => {
            print!("{}", report.text);
            std::process::exit(code);
        }
        Err(e) => {
            eprintln!("anonset: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
