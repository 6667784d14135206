//! Merging command-line flags with a `--config` file.
//!
//! Flags are serialized to a JSON object, the config file is laid over it
//! (objects merge key by key, everything else is replaced) and the result is
//! deserialized into the command's option type. Relative paths coming from
//! flags are made absolute against the working directory; relative paths in
//! a config file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::Failure;

pub struct ConfigFile {
    pub path: PathBuf,
    pub value: Value,
}

impl ConfigFile {
    pub fn load(path: &Path, command: &str) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("config {}: {e}", path.display())))?;
        let Value::Object(map) = &mut value else {
            return Err(Failure::validation("config file must hold a JSON object"));
        };
        if let Some(c) = map.remove("command") {
            if c.as_str() != Some(command) {
                return Err(Failure::validation(format!(
                    "config {} is for command {c}, not {command:?}",
                    path.display()
                )));
            }
        }
        map.remove("description");
        Ok(Self {
            path: path.to_path_buf(),
            value,
        })
    }

    pub fn load_optional(path: Option<&Path>, command: &str) -> Result<Option<Self>, Failure> {
        path.map(|p| Self::load(p, command)).transpose()
    }

    pub fn base_dir(&self) -> PathBuf {
        self.path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Drops `null` members so unset flags never shadow anything.
pub fn prune(value: Value) -> Value {
    match value {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, prune(v)))
                .filter(|(_, v)| !matches!(v, Value::Object(m) if m.is_empty()))
                .collect(),
        ),
        other => other,
    }
}

pub fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

/// Flags overlaid by the config file, plus the directory relative paths are
/// resolved against.
pub fn merge<T: DeserializeOwned>(flags: Value, config: Option<&ConfigFile>) -> Result<(T, Value, PathBuf), Failure> {
    let mut merged = prune(flags);
    if merged.is_null() {
        merged = Value::Object(Map::new());
    }
    let base = match config {
        Some(c) => {
            overlay(&mut merged, c.value.clone());
            c.base_dir()
        }
        None => PathBuf::new(),
    };
    let typed = serde_json::from_value(merged.clone()).map_err(|e| Failure::validation(format!("options: {e}")))?;
    Ok((typed, merged, base))
}

/// Absolute path for a flag value.
pub fn absolute(p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| std::path::absolute(p).unwrap_or_else(|_| p.clone()))
}
