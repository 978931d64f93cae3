//! `key = value` files whose entries become command-line flags.

use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parses `key = value` lines. `#` starts a comment line; blank lines are
/// skipped. Keys use letters, digits, `-` and `_`, and come back with `_`
/// turned into `-` so they match flag names.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigError { line: idx + 1, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, found {line:?}")))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(err(format!("invalid key {key:?}")));
        }
        if key == "config" {
            return Err(err("config files cannot include other config files".into()));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(err(format!("key {key:?} has no value")));
        }
        out.push((key.replace('_', "-"), value.to_string()));
    }
    Ok(out)
}

/// Flags for parsed entries. `true` gives a bare switch and `false` drops
/// the entry.
pub fn config_args(entries: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.clone());
            }
        }
    }
    args
}
