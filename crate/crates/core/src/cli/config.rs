//! Flat JSON configuration files merged under command-line flags.

use super::CliError;
use serde_json::{Map, Value};
use std::path::Path;

/// Key/value view of a flat JSON object.
#[derive(Debug, Default)]
pub struct FlatConfig {
    values: Map<String, Value>,
    source: String,
}

impl FlatConfig {
    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::schema(format!("cannot read config {}: {e}", path.display())))?;
        let source = path.display().to_string();
        let value: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::schema(format!("{source}: line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let Value::Object(values) = value else {
            return Err(CliError::schema(format!("{source}: line 1: top level must be a JSON object")));
        };
        if let Some(k) = values.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(CliError::schema(format!(
                "{source}: line {}: unknown key '{k}'",
                key_line(&text, k)
            )));
        }
        Ok(FlatConfig { values, source })
    }

    fn bad(&self, key: &str, what: &str) -> CliError {
        CliError::schema(format!("{}: key '{key}' must be {what}", self.source))
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.bad(key, "a string")),
        }
    }

    /// A list given either as a JSON array of strings or a comma-separated string.
    pub fn list(&self, key: &str) -> Result<Option<Vec<String>>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(split_list(s))),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.trim().to_string()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ => Err(self.bad(key, "a list of strings")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(_) => Err(self.bad(key, "a list")),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n.as_f64().map(Some).ok_or_else(|| self.bad(key, "a number")),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => n.as_u64().map(Some).ok_or_else(|| self.bad(key, "a non-negative integer")),
            Some(_) => Err(self.bad(key, "a non-negative integer")),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(self.bad(key, "a boolean")),
        }
    }
}

fn key_line(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}
