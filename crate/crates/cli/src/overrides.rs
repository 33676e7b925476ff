//! JSON config documents with `key.path=value` overrides.

use std::fs;
use std::path::Path;

use emoclass::Error;
use serde_json::{Map, Value};

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_owned(),
        message: message.into(),
    }
}

/// Reads a JSON object, or starts from `{}` when no file is given.
pub fn load_document(path: Option<&Path>) -> Result<Value, Error> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| config_error("<config>", format!("{}: {e}", path.display())))?;
    if !doc.is_object() {
        return Err(config_error("<config>", "top level must be a JSON object"));
    }
    Ok(doc)
}

/// Sets `a.b.c` to `value`, creating intermediate objects. The value is read
/// as JSON when it parses, else as a plain string.
pub fn set(doc: &mut Value, key: &str, raw: &str) -> Result<(), Error> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    set_value(doc, key, value)
}

pub fn set_value(doc: &mut Value, key: &str, value: Value) -> Result<(), Error> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_error(key, "malformed key"));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_error(key, format!("`{part}` is not inside an object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .ok_or_else(|| config_error(key, "parent is not an object"))?
        .insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

/// Applies `KEY=VALUE` assignments in order.
pub fn apply(doc: &mut Value, assignments: &[String]) -> Result<(), Error> {
    for a in assignments {
        let (key, value) = a
            .split_once('=')
            .ok_or_else(|| config_error(a, "expected KEY=VALUE"))?;
        set(doc, key.trim(), value)?;
    }
    Ok(())
}

pub fn decode<T: serde::de::DeserializeOwned>(doc: Value, what: &str) -> Result<T, Error> {
    serde_json::from_value(doc).map_err(|e| config_error(what, e.to_string()))
}
