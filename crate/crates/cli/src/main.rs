mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use qosc_core::ErrorClass;

use config::{Cli, RunConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_CERTIFICATE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<qosc_core::Error>().map(qosc_core::Error::class) {
        Some(ErrorClass::Domain) => EXIT_DOMAIN,
        Some(ErrorClass::Numerical) => EXIT_NUMERICAL,
        Some(ErrorClass::Usage) | None => EXIT_USAGE,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = RunConfig::resolve(cli.command, cli.flags)?;
    let outcome = commands::run(&cfg)?;
    let text = outcome.report.render(cfg.format)?;
    output::emit(&text, cfg.out.as_deref())?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.failed.is_empty() {
        Ok(0)
    } else {
        for f in &outcome.failed {
            eprintln!("failed: {f}");
        }
        Ok(EXIT_CERTIFICATE)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
