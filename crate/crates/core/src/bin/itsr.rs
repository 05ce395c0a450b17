use clap::Parser;
use itsr_core::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!(
            "{}",
            serde_json::json!({"error": err.kind(), "message": err.to_string()})
        );
        std::process::exit(err.exit_code());
    }
}
