use std::process::ExitCode;

use clap::Parser;
use graphwalk_cli::{exit_code, run, Cli, Command};
use serde_json::json;
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let default_level = if matches!(cli.command, Some(Command::Serve { .. })) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .init();

    match run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            println!("{}", json!({"status": "error", "exit_code": code, "error": format!("{e:#}")}));
            ExitCode::from(code)
        }
    }
}
