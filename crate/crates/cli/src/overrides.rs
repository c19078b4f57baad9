//! Layered JSON configuration: defaults, then a config file, then
//! `--set key.path=value` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{config_err, CliResult};

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply one `a.b.c=value` override. The value is parsed as JSON when it
/// can be, and taken as a string otherwise.
pub fn apply_set(tree: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(config_err(format!("empty key segment in {key:?}")));
        }
        let obj = match node {
            Value::Object(o) => o,
            _ => return Err(config_err(format!("{key:?}: {} is not a section", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Resolve `T` from its defaults tree, an optional JSON file and overrides.
/// Unknown keys surface as configuration errors when `T` denies them.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: Value, file: Option<&Path>, sets: &[String]) -> CliResult<(T, Value)> {
    let mut tree = defaults;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let top: Value = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        merge(&mut tree, top);
    }
    for s in sets {
        apply_set(&mut tree, s)?;
    }
    let cfg: T = serde_json::from_value(tree).map_err(|e| config_err(format!("configuration: {e}")))?;
    let resolved = serde_json::to_value(&cfg).expect("configuration serializes");
    Ok((cfg, resolved))
}

pub fn defaults<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("configuration serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use facediff::train::TrainConfig;
    use serde_json::json;

    #[test]
    fn nested_override_and_file_merge() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"lr": 0.5, "network": {"latent_channels": 8}}"#).unwrap();
        let sets = vec!["network.num_vertices=12".to_string(), "batch_size=3".to_string()];
        let (cfg, tree): (TrainConfig, _) = resolve(defaults(&TrainConfig::default()), Some(&file), &sets).unwrap();
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.network.latent_channels, 8);
        assert_eq!(cfg.network.num_vertices, 12);
        assert_eq!(cfg.batch_size, 3);
        assert_eq!(tree["batch_size"], json!(3));
    }

    #[test]
    fn unknown_key_is_config_error() {
        let sets = vec!["no_such_field=1".to_string()];
        let err = resolve::<TrainConfig>(defaults(&TrainConfig::default()), None, &sets).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(apply_set(&mut json!({}), "novalue").is_err());
        assert!(apply_set(&mut json!({"a": 1}), "a.b=2").is_err());
    }

    #[test]
    fn string_fallback() {
        let mut t = json!({"schedule": "cosine"});
        apply_set(&mut t, "schedule=linear").unwrap();
        assert_eq!(t["schedule"], json!("linear"));
    }
}
