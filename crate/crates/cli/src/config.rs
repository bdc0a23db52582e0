//! `--config` files: `key=value` lines turned into flags placed ahead of the
//! command-line flags, so a flag given on the command line always wins.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::Failure;

/// Returns `args` with the values of the `--config` file spliced in after
/// the subcommand name. Keys that name no flag of any subcommand are
/// errors; keys that belong to another subcommand are ignored.
pub fn merge(root: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(sub_name) = args.get(1).and_then(|a| a.to_str()) else {
        return Ok(args);
    };
    let Some(sub) = root.find_subcommand(sub_name) else {
        return Ok(args);
    };
    let entries = read_entries(Path::new(&path))?;
    let mut injected = Vec::new();
    for (line, key, value) in entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            let known = root.get_subcommands().any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if known {
                continue;
            }
            return Err(format_error(&path, line, format!("unknown key {:?}", key)));
        };
        if key == "config" || given_on_command_line(&args, &key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{}", key))),
                "false" => {}
                _ => return Err(format_error(&path, line, format!("{} takes true or false", key))),
            },
            _ => injected.push(OsString::from(format!("--{}={}", key, value))),
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(injected);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<String> {
    let mut it = args.iter().filter_map(|a| a.to_str());
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(str::to_string);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{}", key);
    args.iter()
        .filter_map(|a| a.to_str())
        .any(|a| a == flag || a.strip_prefix(flag.as_str()).is_some_and(|rest| rest.starts_with('=')))
}

/// `(line number, key, value)` of every non-blank, non-comment line.
fn read_entries(path: &Path) -> Result<Vec<(usize, String, String)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ssan::Error::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format_error(&path.display().to_string(), i + 1, "expected key=value".into()));
        };
        out.push((i + 1, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn format_error(path: &str, line: usize, reason: String) -> Failure {
    Failure::Core(ssan::Error::Format { path: path.into(), reason: format!("line {}: {}", line, reason) })
}
