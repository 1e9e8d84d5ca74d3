//! Config-file merging. A file of `key = value` lines is turned into
//! `--key value` flags placed directly after the subcommand, ahead of the
//! user's own flags; since every flag overrides earlier occurrences of
//! itself, explicit flags beat the file and the file beats clap defaults.

use std::ffi::OsString;
use std::path::Path;

use anyhow::Result;

use crate::usage;

pub const SUBCOMMANDS: [&str; 5] = ["synth", "build-graph", "train", "eval", "explain"];

/// Finds `--config FILE` / `--config=FILE` anywhere in `argv`.
pub fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Flags equivalent to a config file body.
pub fn file_flags(text: &str, origin: &Path) -> Result<Vec<OsString>> {
    let table: toml::Table = toml::from_str(text)
        .map_err(|e| usage(format!("cannot parse config {}: {e}", origin.display())))?;
    let mut flags = Vec::new();
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err(usage(format!("{}: config files cannot nest", origin.display())));
        }
        let text = match value {
            toml::Value::Boolean(true) => {
                flags.push(flag.into());
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            other => {
                return Err(usage(format!(
                    "{}: key {key:?} has unsupported value {other}",
                    origin.display()
                )))
            }
        };
        flags.push(flag.into());
        flags.push(text.into());
    }
    Ok(flags)
}

/// `argv` with the config file's flags spliced in after the subcommand.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let flags = file_flags(&text, path)?;
    let Some(at) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        // let clap report the missing subcommand
        return Ok(argv);
    };
    let mut merged = argv[..=at].to_vec();
    merged.extend(flags);
    merged.extend_from_slice(&argv[at + 1..]);
    Ok(merged)
}
