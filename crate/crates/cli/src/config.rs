//! Config resolution: defaults, then the `--config` file, then flags. The merged object is
//! deserialized into the subcommand's config type, which rejects unknown keys.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::run::Run;

/// Recursive object merge. An overlay object carrying a `kind` tag replaces the base
/// wholesale, since its fields belong to a different variant.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") => {
            for (k, v) in o {
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

/// Flag overrides as a JSON object. `set` takes a dotted path.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set(&mut self, path: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).expect("flag values serialize");
        let mut keys: Vec<&str> = path.split('.').collect();
        let last = keys.pop().expect("non-empty path");
        let mut obj = &mut self.0;
        for k in keys {
            obj = obj
                .entry(k)
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("override paths do not collide");
        }
        obj.insert(last.to_string(), value);
        self
    }

    pub fn opt(&mut self, path: &str, value: Option<impl Serialize>) -> &mut Self {
        if let Some(v) = value {
            self.set(path, v);
        }
        self
    }
}

/// Resolved config plus its canonical JSON form for echoing.
pub fn resolve<T>(run: &mut Run, file: Option<&Path>, overrides: Overrides) -> Result<(T, Value)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut merged = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let from_file: Value = run.read_json(path)?;
        if !from_file.is_object() {
            anyhow::bail!("config {} must be a JSON object", path.display());
        }
        merge(&mut merged, from_file);
    }
    merge(&mut merged, Value::Object(overrides.0));
    let config: T = serde_json::from_value(merged).with_context(|| match file {
        Some(p) => format!("invalid config {}", p.display()),
        None => "invalid config".to_string(),
    })?;
    let echoed = serde_json::to_value(&config)?;
    Ok((config, echoed))
}
