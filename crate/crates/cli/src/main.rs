mod config;
mod error;
mod io;
mod output;
mod run;

use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;

use config::{Cli, RunConfig};
use error::CliError;

fn execute(cli: &Cli) -> Result<(), CliError> {
    let map = config::merged_settings(cli.command.flags())?;
    let cfg = RunConfig::resolve(cli.command.name(), &map)?;
    let mut doc = run::run(&cfg)?;
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    doc["timestamp"] = serde_json::json!(ts);
    let bytes = output::to_json_bytes(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    io::write_output(cfg.out.as_deref(), &bytes)
}

fn report(err: &CliError) -> ExitCode {
    let bytes = output::to_json_bytes(&err.to_json()).unwrap_or_default();
    eprintln!("{}", String::from_utf8_lossy(&bytes));
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return report(&CliError::Usage(e.to_string()));
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
