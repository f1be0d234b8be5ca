mod commands;
mod config;
mod light;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use clocksim::ErrorCategory;

use commands::Command;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] clocksim::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Numerical => 3,
                ErrorCategory::Io => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "clocksim",
    version,
    about = "Simulate and analyse a light-entrained circadian clock network",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Finds `--config <path>` and splices the file's settings in directly after
/// the subcommand name(s), ahead of the explicit flags.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let path = strs.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strs.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(String::from)
        }
    });
    let Some(path) = path else { return Ok(argv) };

    let cmd = Cli::command();
    let mut sub = None;
    let mut insert_at = None;
    for (i, a) in strs.iter().enumerate().skip(1) {
        if let Some(s) = cmd.find_subcommand(a) {
            if s.has_subcommands() {
                if let Some(leaf) = strs.get(i + 1).and_then(|b| s.find_subcommand(b)) {
                    sub = Some((format!("{a}.{}", leaf.get_name()), leaf.clone()));
                    insert_at = Some(i + 2);
                }
            } else {
                sub = Some((a.clone(), s.clone()));
                insert_at = Some(i + 1);
            }
            break;
        }
    }
    let (Some((name, sub)), Some(at)) = (sub, insert_at) else {
        return Err(CliError::Config("--config needs a subcommand".into()));
    };
    let path = PathBuf::from(path);
    let section = name.rsplit('.').next().unwrap_or(&name).to_string();
    let table = config::load(&path, &section)?;
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(String::from))
        .collect();
    let extra = config::to_args(&table, &known, &path)?;
    let mut out = argv;
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

fn run() -> Result<(), CliError> {
    let argv = expand_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    commands::run(cli.command)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clocksim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
