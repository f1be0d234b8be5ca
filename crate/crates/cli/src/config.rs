//! Structured config files. A file is turned into flags that are spliced in
//! front of the command-line flags, so anything given on the command line
//! wins.

use std::path::Path;

use serde_json::Value;

use crate::CliError;

/// Reads a TOML config, or the `config` block of a JSON manifest, and returns
/// the table that applies to `section` (a top-level table of that name if
/// present, otherwise the whole file).
pub fn load(path: &Path, section: &str) -> Result<serde_json::Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        v.get("config").cloned().unwrap_or(v)
    } else {
        let t: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).expect("toml values are representable")
    };
    let Value::Object(mut table) = value else {
        return Err(CliError::Config(format!("{}: expected a table", path.display())));
    };
    match table.remove(section) {
        Some(Value::Object(t)) => Ok(t),
        _ => Ok(table),
    }
}

/// Converts a config table into `--flag value...` tokens. `known` lists the
/// long flag names the subcommand accepts.
pub fn to_args(
    table: &serde_json::Map<String, Value>,
    known: &[String],
    origin: &Path,
) -> Result<Vec<String>, CliError> {
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = key.replace('_', "-");
        if !known.contains(&flag) || flag == "config" {
            return Err(CliError::Config(format!("{}: unknown field `{key}`", origin.display())));
        }
        let scalar = |v: &Value| -> Result<String, CliError> {
            match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                Value::Bool(b) => Ok(b.to_string()),
                _ => Err(CliError::Config(format!(
                    "{}: field `{key}` must be a string, number or list of them",
                    origin.display()
                ))),
            }
        };
        match value {
            Value::Bool(false) | Value::Null => {}
            Value::Bool(true) => out.push(format!("--{flag}")),
            Value::Array(items) => {
                out.push(format!("--{flag}"));
                for v in items {
                    out.push(scalar(v)?);
                }
            }
            v => {
                out.push(format!("--{flag}"));
                out.push(scalar(v)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_become_flags() {
        let t: toml::Table = toml::from_str("t_end = 48\nlight = [\"LD\", 12, 12]\nretain_traces = true\nx = false").unwrap();
        let m = serde_json::to_value(t).unwrap();
        let known: Vec<String> = ["t-end", "light", "retain-traces", "x"].map(String::from).to_vec();
        let args = to_args(m.as_object().unwrap(), &known, Path::new("c.toml")).unwrap();
        assert_eq!(args, ["--light", "LD", "12", "12", "--retain-traces", "--t-end", "48"]);
    }

    #[test]
    fn unknown_fields_are_named() {
        let m = serde_json::json!({"t_edn": 4});
        let err = to_args(m.as_object().unwrap(), &["t-end".into()], Path::new("c.toml")).unwrap_err();
        assert!(err.to_string().contains("t_edn"));
    }
}
