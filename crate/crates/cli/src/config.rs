//! JSON config files: each key names a long flag of the selected subcommand
//! and is appended to the argument list unless that flag was given already.

use std::collections::BTreeSet;

use serde_json::Value;

use crate::output::Failure;

pub fn merge(argv: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::new("E_IO", format!("io error on {path}: {e}")))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Failure::new("E_CONFIG", format!("{path}: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Failure::new("E_CONFIG", format!("{path}: expected a JSON object")));
    };
    let given: BTreeSet<String> = argv
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut out = argv;
    for (key, value) in map {
        let flag = key.replace('_', "-");
        if given.contains(&flag) || flag == "config" {
            continue;
        }
        match value {
            Value::Bool(true) => out.push(format!("--{flag}")),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let parts: Result<Vec<String>, Failure> = items.iter().map(|v| scalar(&key, v)).collect();
                out.push(format!("--{flag}={}", parts?.join(",")));
            }
            v => out.push(format!("--{flag}={}", scalar(&key, &v)?)),
        }
    }
    Ok(out)
}

fn scalar(key: &str, v: &Value) -> Result<String, Failure> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Failure::new("E_CONFIG", format!("config key '{key}' must hold a string, number, boolean or array of those"))),
    }
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
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

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn command_line_wins_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"gamma": 2.5, "seed": 4, "methods": ["nnfem", "fvm"], "timing": true}"#).unwrap();
        let p = path.to_str().unwrap();
        let out = merge(args(&["meso", "compare", "--config", p, "--seed", "9"])).unwrap();
        assert!(out.contains(&"--gamma=2.5".to_string()));
        assert!(out.contains(&"--methods=nnfem,fvm".to_string()));
        assert!(out.contains(&"--timing".to_string()));
        assert!(!out.iter().any(|a| a.starts_with("--seed=")));
    }

    #[test]
    fn non_object_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "[1, 2]").unwrap();
        let err = merge(args(&["meso", "--config", path.to_str().unwrap()])).unwrap_err();
        assert_eq!(err.code, "E_CONFIG");
    }
}
