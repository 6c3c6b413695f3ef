use clap::Parser;
use membrane_mech_cli::{exit, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::FATAL
        }
    };
    std::process::exit(code);
}
