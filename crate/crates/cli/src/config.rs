//! `key = value` config files. Each key names a long flag of the chosen
//! subcommand; the file's flags are inserted before the command-line flags so
//! that the latter win.

use std::fs;
use std::path::Path;

use clap::Command;

use crate::CliError;

fn parse_line(line: &str) -> Option<Result<(String, String), String>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => {
            Ok((k.trim().replace('_', "-"), v.trim().to_string()))
        }
        _ => Err(format!("expected `key = value`, got `{line}`")),
    })
}

/// Expands `path` into flags for `sub`.
pub fn config_args(path: &Path, sub: &Command) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(entry) = parse_line(line) else {
            continue;
        };
        let (key, value) =
            entry.map_err(|m| CliError::Usage(format!("{}:{}: {m}", path.display(), i + 1)))?;
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: `{key}` is not a flag of `{}`",
                    path.display(),
                    i + 1,
                    sub.get_name()
                ))
            })?;
        if arg.get_action().takes_values() {
            out.push(format!("--{key}"));
            out.push(value);
        } else {
            match value.as_str() {
                "true" => out.push(format!("--{key}")),
                "false" => {}
                _ => {
                    return Err(CliError::Usage(format!(
                        "{}:{}: `{key}` takes true or false",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Finds `--config` anywhere after the subcommand and splices the file's
/// flags in right after the subcommand name.
pub fn expand(args: Vec<String>, root: &Command) -> Result<Vec<String>, CliError> {
    let Some(sub_pos) = args
        .iter()
        .position(|a| root.get_subcommands().any(|s| s.get_name() == a))
    else {
        return Ok(args);
    };
    let sub = root
        .find_subcommand(&args[sub_pos])
        .expect("position matched a subcommand");
    let mut rest = Vec::new();
    let mut config = None;
    let mut iter = args[sub_pos + 1..].iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config = Some(
                iter.next()
                    .ok_or_else(|| CliError::Usage("--config needs a path".into()))?
                    .clone(),
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(config) = config else {
        return Ok(args);
    };
    let mut out = args[..=sub_pos].to_vec();
    out.extend(config_args(Path::new(&config), sub)?);
    out.extend(rest);
    Ok(out)
}
