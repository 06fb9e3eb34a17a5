//! `stw`: command-line workflows over `skintone-core` and the annotation server.

pub mod commands;
pub mod config;
pub mod palette;
pub mod record;
pub mod serve;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use crate::commands::Command;
use crate::config::ToolkitConfig;

#[derive(Debug, Parser)]
#[command(name = "stw", version, about = "Skin tone classification and dataset auditing toolkit")]
pub struct Cli {
    /// Toolkit config (JSON or TOML); falls back to $STW_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Exit codes: 0 success, 1 operation error, 2 usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = ToolkitConfig::resolve(cli.config.as_deref()).and_then(|cfg| cli.command.run(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
