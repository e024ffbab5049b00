mod args;
mod commands;
mod io;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use manifest::Context;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    Ok = 0,
    Usage = 1,
    Internal = 2,
    Check = 3,
}

/// A check (gradient check, replay digest) that ran and failed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn classify(e: &anyhow::Error) -> Exit {
    if e.downcast_ref::<CheckFailed>().is_some() {
        return Exit::Check;
    }
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<momentreg::Error>() {
            use momentreg::Error::*;
            return match err {
                GradientCheck { .. } => Exit::Check,
                RefinerFailed { .. } | Divergence { .. } | DegenerateBaseSimilarity(_) => Exit::Internal,
                _ => Exit::Usage,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return Exit::Usage;
        }
    }
    Exit::Internal
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match cli.command {
        Command::Replay(r) => manifest::replay(&r, cli.threads),
        command => {
            let ctx = Context { seed: cli.seed, threads: cli.threads, embedded_config: None };
            commands::execute(command, &ctx)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    Exit::Ok
                }
                _ => Exit::Usage,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => Exit::Ok,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            classify(&e)
        }
        Err(_) => Exit::Internal,
    };
    ExitCode::from(code as u8)
}
