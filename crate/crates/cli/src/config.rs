//! Parameter resolution: command-line flag, then config file, then default.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Settings loaded from `--config`.
///
/// A TOML or JSON document whose top-level keys apply to every command and
/// whose tables named after a command (`[train]`) apply to that command. A
/// run manifest is accepted too: its `params` replay the recorded run.
#[derive(Debug, Default)]
pub struct Config {
    global: Map<String, Value>,
    sections: Map<String, Value>,
}

impl Config {
    pub fn load(path: &Path, command: &str) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))?
        } else {
            let t: toml::Table =
                toml::from_str(&text).map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))?;
            serde_json::to_value(t).map_err(|e| Failure::usage(e.to_string()))?
        };
        let Value::Object(mut root) = value else {
            return Err(Failure::usage(format!("config {} is not a table", path.display())));
        };
        if let (Some(Value::String(cmd)), Some(Value::Object(params))) = (root.get("command"), root.get("params")) {
            if cmd != command {
                return Err(Failure::usage(format!("manifest is for `{cmd}`, not `{command}`")));
            }
            let mut sections = Map::new();
            sections.insert(command.to_string(), Value::Object(params.clone()));
            return Ok(Self {
                global: Map::new(),
                sections,
            });
        }
        let mut sections = Map::new();
        root.retain(|k, v| {
            if v.is_object() {
                sections.insert(k.clone(), v.clone());
                false
            } else {
                true
            }
        });
        Ok(Self { global: root, sections })
    }

    fn lookup(&self, command: &str, key: &str) -> Option<&Value> {
        self.sections
            .get(command)
            .and_then(|s| s.get(key))
            .or_else(|| self.global.get(key))
            .filter(|v| !v.is_null())
    }
}

/// Resolved parameters of one command, recorded in its manifest.
pub struct Params<'a> {
    command: &'static str,
    config: &'a Config,
    pub resolved: Map<String, Value>,
}

impl<'a> Params<'a> {
    pub fn new(command: &'static str, config: &'a Config) -> Self {
        Self {
            command,
            config,
            resolved: Map::new(),
        }
    }

    fn config_value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.config
            .lookup(self.command, key)
            .map(|v| {
                serde_json::from_value(v.clone())
                    .map_err(|e| Failure::usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.resolved
            .insert(key.to_string(), serde_json::to_value(value).expect("parameters serialize"));
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure> {
        let v = match flag {
            Some(v) => v,
            None => self.config_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.config_value(key)?,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<T, Failure> {
        self.optional(key, flag)?
            .ok_or_else(|| Failure::usage(format!("`{}` needs --{}", self.command, key.replace('_', "-"))))
    }

    /// A list flag; an empty command-line list defers to the config.
    pub fn list<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Vec<T>) -> Result<Vec<T>, Failure> {
        let v = if flag.is_empty() {
            self.config_value(key)?.unwrap_or_default()
        } else {
            flag
        };
        self.record(key, &v);
        Ok(v)
    }
}
