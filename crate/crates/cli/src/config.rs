//! JSON config files merged with command-line flags.
//!
//! Every subcommand has one parameter struct that is both the clap argument
//! set and the config-file schema; keys are the flag names (`gamma-min`
//! for `--gamma-min`). Flags win over file values, unknown keys are
//! rejected, and the resolved struct is echoed to `config.json`.

use std::fs;
use std::path::Path;

use anyhow::Context;
use kslab::KsError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const ECHO_FILE: &str = "config.json";

pub trait Params: Serialize + DeserializeOwned + Clone {
    /// Subcommand name, also stored under `command` in the echo.
    const COMMAND: &'static str;

    /// Fill defaults and check preconditions.
    fn resolve(self) -> Result<Self, KsError>;
}

/// Overlay `flags` on the optional config file and resolve the result.
pub fn merge<P: Params>(flags: &P, file: Option<&Path>) -> Result<P, KsError> {
    let mut obj = match file {
        Some(path) => read_object(path)?,
        None => Map::new(),
    };
    match obj.remove("command") {
        None => {}
        Some(Value::String(c)) if c == P::COMMAND => {}
        Some(other) => {
            return Err(KsError::Config(format!(
                "config file is for command {other}, not {}",
                P::COMMAND
            )))
        }
    }
    check_keys::<P>(&obj)?;
    let Value::Object(from_flags) = to_value(flags)? else {
        unreachable!("parameter structs serialize to objects")
    };
    obj.extend(from_flags);
    let merged: P = serde_json::from_value(Value::Object(obj)).map_err(|e| KsError::Config(e.to_string()))?;
    merged.resolve()
}

fn read_object(path: &Path) -> Result<Map<String, Value>, KsError> {
    let text = fs::read_to_string(path)
        .map_err(|e| KsError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(obj)) => Ok(obj),
        Ok(_) => Err(KsError::Config(format!("config file {} must hold a JSON object", path.display()))),
        Err(e) => Err(KsError::Config(format!("config file {}: {e}", path.display()))),
    }
}

/// Deserialize key by key so that a type error names its key.
fn check_keys<P: Params>(obj: &Map<String, Value>) -> Result<(), KsError> {
    for (key, value) in obj {
        let single = Value::Object(Map::from_iter([(key.clone(), value.clone())]));
        serde_json::from_value::<P>(single).map_err(|e| KsError::Config(format!("key `{key}`: {e}")))?;
    }
    Ok(())
}

fn to_value<P: Serialize>(p: &P) -> Result<Value, KsError> {
    serde_json::to_value(p).map_err(|e| KsError::Config(e.to_string()))
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn pretty<T: Serialize>(value: &T) -> anyhow::Result<String> {
    // `Value` maps are ordered by key.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// Write the resolved parameters, tagged with the command, to `dir`.
pub fn echo<P: Params>(params: &P, dir: &Path) -> anyhow::Result<()> {
    let mut v = to_value(params)?;
    if let Value::Object(obj) = &mut v {
        obj.insert("command".into(), Value::String(P::COMMAND.into()));
    }
    write(dir, ECHO_FILE, &pretty(&v)?)
}

pub fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}
