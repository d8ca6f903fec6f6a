use clap::Parser;
use tabplex::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let kind = if err.is_validation() { "validation" } else { "runtime" };
        eprintln!(
            "{}",
            serde_json::json!({"error": err.to_string(), "kind": kind})
        );
        std::process::exit(exit_code(&err));
    }
}
