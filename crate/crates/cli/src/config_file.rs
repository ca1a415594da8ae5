//! `--config` files: TOML whose keys are long flag names.
//!
//! Top-level keys apply to every sub-command; a table named after the
//! sub-command applies to it alone. Values become flags inserted right
//! after the sub-command name, so flags given on the command line, which
//! come later, override them.

use std::path::Path;

use fogclear_core::{Error, Result};
use toml::{Table, Value};

use crate::args::SUBCOMMANDS;

/// Value of `--config` if present (`--config p` or `--config=p`).
pub fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<Option<String>> {
    Ok(Some(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(_) => return Ok(None),
        other => {
            return Err(Error::InvalidArgument(format!(
                "config key {key}: unsupported value {other}"
            )))
        }
    }))
}

fn push_flags(key: &str, v: &Value, out: &mut Vec<String>) -> Result<()> {
    match v {
        Value::Boolean(true) => out.push(format!("--{key}")),
        Value::Boolean(false) => {}
        Value::Array(items) => {
            for item in items {
                push_flags(key, item, out)?;
            }
        }
        other => {
            if let Some(s) = scalar(key, other)? {
                out.push(format!("--{key}={s}"));
            }
        }
    }
    Ok(())
}

/// Flags a config table contributes to `subcommand`.
pub fn flags_from_table(table: &Table, subcommand: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (key, v) in table {
        match v {
            Value::Table(_) => {}
            _ if key == "config" => {
                return Err(Error::InvalidArgument("config files cannot include other config files".into()))
            }
            _ => push_flags(key, v, &mut out)?,
        }
    }
    if let Some(Value::Table(sub)) = table.get(subcommand) {
        for (key, v) in sub {
            push_flags(key, v, &mut out)?;
        }
    }
    Ok(out)
}

/// `argv` with config-file flags spliced in after the sub-command.
pub fn expand_argv(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))?;
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
        field: "config".into(),
        message: e.message().to_string(),
    })?;
    let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let extra = flags_from_table(&table, &argv[pos])?;
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
