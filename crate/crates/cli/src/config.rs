//! `key = value` config files. Keys are long flag names (`dist-m` or
//! `dist_m`); values are injected ahead of the command-line flags so the
//! flags win.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::error::CliError;

pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config {
                path: path.into(),
                msg: format!("line {}: expected `key = value`", i + 1),
            });
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Config { path: path.into(), msg: format!("line {}: empty key", i + 1) });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Turns config entries into flags for `subcommand`. Unknown keys, hidden
/// flags and `config` itself are rejected.
pub fn to_flags(entries: &[(String, String)], subcommand: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{subcommand}`")))?;
    let err = |msg: String| CliError::Config { path: path.into(), msg };
    let mut flags = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !a.is_hide_set() && key != "config")
            .ok_or_else(|| err(format!("unknown key `{key}` for `{subcommand}`")))?;
        match arg.get_action() {
            ArgAction::SetTrue => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => flags.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                _ => return Err(err(format!("`{key}` expects true or false, got `{value}`"))),
            },
            _ => flags.push(format!("--{key}={value}").into()),
        }
    }
    Ok(flags)
}

/// Value of `--config` in a subcommand's argument list, if present.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}
