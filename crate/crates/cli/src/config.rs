//! Config resolution: defaults, then config file, then flags, with
//! `STAGENET_SEED` as the seed of last resort.

use std::path::Path;

use serde_json::{Map, Value};
use stagenet_core::{Error, Result};

pub const SEED_ENV: &str = "STAGENET_SEED";

/// Reads a JSON object from a config file.
pub fn read_config_object(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(Error::Config(format!(
            "{}: config file must hold a JSON object",
            path.display()
        ))),
    }
}

/// Overlays `patch` onto `base`, rejecting keys the base schema does not
/// know (typo protection).
pub fn merge_into(base: &mut Map<String, Value>, patch: &Map<String, Value>) -> Result<()> {
    for (key, value) in patch {
        if !base.contains_key(key) {
            return Err(Error::Config(format!("unknown config key: {key}")));
        }
        base.insert(key.clone(), value.clone());
    }
    Ok(())
}

/// The seed from the environment, when set and parseable.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={raw} is not a valid u64 seed"))),
        Err(_) => Ok(None),
    }
}

/// Resolves a typed config: serialize the default, overlay the optional
/// file, apply flag overrides, then apply the seed fallback chain
/// (flag > file > env > default).
pub fn resolve<T>(
    default: &T,
    config_path: Option<&Path>,
    flag_overrides: &[(&str, Option<Value>)],
    seed_flag: Option<u64>,
) -> Result<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut base = match serde_json::to_value(default)
        .map_err(|e| Error::Config(format!("serialize default config: {e}")))?
    {
        Value::Object(map) => map,
        _ => return Err(Error::Config("default config is not an object".into())),
    };
    let mut seed_from_file = false;
    if let Some(path) = config_path {
        let file = read_config_object(path)?;
        seed_from_file = file.contains_key("seed");
        merge_into(&mut base, &file)?;
    }
    for (key, value) in flag_overrides {
        if let Some(v) = value {
            if !base.contains_key(*key) {
                return Err(Error::Config(format!("unknown config key: {key}")));
            }
            base.insert((*key).to_string(), v.clone());
        }
    }
    match seed_flag {
        Some(seed) => {
            base.insert("seed".into(), Value::from(seed));
        }
        None => {
            if !seed_from_file {
                if let Some(seed) = env_seed()? {
                    base.insert("seed".into(), Value::from(seed));
                }
            }
        }
    }
    serde_json::from_value(Value::Object(base))
        .map_err(|e| Error::Config(format!("invalid configuration: {e}")))
}
