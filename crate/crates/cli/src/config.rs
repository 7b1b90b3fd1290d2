//! `--config FILE`: a JSON object whose keys are flag names. Its entries are
//! spliced into argv right after the subcommand so clap validates them like
//! typed flags, and a flag given both ways is rejected as a duplicate.

use std::ffi::OsString;

use serde_json::Value;

use crate::CliError;

fn is_flag(arg: &OsString) -> bool {
    arg.to_string_lossy().starts_with('-')
}

/// Position of the subcommand and the config path, if `--config` precedes it.
fn config_path(argv: &[OsString]) -> Option<(usize, OsString)> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s == "--config" {
            path = Some(argv.get(i + 1)?.clone());
            i += 2;
            continue;
        }
        if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else if !is_flag(&argv[i]) {
            return path.map(|p| (i, p));
        }
        i += 1;
    }
    None
}

fn scalar(key: &str, v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(CliError::Config(format!(
            "config key {key:?}: unsupported value {other}"
        ))),
    }
}

fn flags(config: &Value) -> Result<Vec<OsString>, CliError> {
    let map = config
        .as_object()
        .ok_or_else(|| CliError::Config("config file must hold a JSON object".into()))?;
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined = items
                    .iter()
                    .map(|v| scalar(key, v))
                    .collect::<Result<Vec<_>, _>>()?
                    .join(",");
                out.push(format!("{flag}={joined}").into());
            }
            v => out.push(format!("{flag}={}", scalar(key, v)?).into()),
        }
    }
    Ok(out)
}

/// Returns argv with the config entries spliced in.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some((sub_at, path)) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Config(format!(
            "cannot read config {}: {e}",
            path.to_string_lossy()
        ))
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config JSON: {e}")))?;
    let extra = flags(&value)?;
    let mut out = argv[..=sub_at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[sub_at + 1..]);
    Ok(out)
}
