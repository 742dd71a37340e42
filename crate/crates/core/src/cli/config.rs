use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::layers::ModelConfig;
use crate::train::TrainConfig;

/// Everything a command needs besides file paths. Loaded from a JSON file,
/// then patched by `--model.*` / `--train.*` flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Fraction of the training data held out for validation.
    pub val_fraction: f64,
    pub sample_rate_hz: f32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.2,
            sample_rate_hz: 125.0,
        }
    }
}

impl CliConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return Err(Error::config(
                "data.val_fraction",
                format!("{} must lie in (0, 1)", self.data.val_fraction),
            ));
        }
        if !(self.data.sample_rate_hz > 0.0 && self.data.sample_rate_hz.is_finite()) {
            return Err(Error::config("data.sample_rate_hz", "must be positive"));
        }
        Ok(())
    }

    /// Reads `file` (or starts from defaults), applies `overrides` in order
    /// and validates the result.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Open {
                    path: path.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?
            }
            None => serde_json::to_value(CliConfig::default())?,
        };
        for (path, raw) in overrides {
            set_path(&mut value, path, parse_scalar(raw))?;
        }
        let config: CliConfig = serde_json::from_value(value).map_err(|e| {
            let field = overrides
                .iter()
                .map(|(p, _)| p.as_str())
                .find(|p| e.to_string().contains(p.rsplit('.').next().unwrap_or(p)))
                .unwrap_or("config");
            Error::config(field, e.to_string())
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// JSON if it parses, a bare string otherwise.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &str, leaf: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(path, format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), leaf);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::config(path, "empty override path"))
}

/// Dotted config paths with their raw values, in command-line order.
pub type Overrides = Vec<(String, String)>;

/// Splits `--model.x v`, `--train.x=v` and `--data.x v` out of `args`.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let dotted = ["--model.", "--train.", "--data."]
            .iter()
            .any(|p| arg.starts_with(p));
        if !dotted {
            rest.push(arg);
            continue;
        }
        let body = &arg[2..];
        if let Some((k, v)) = body.split_once('=') {
            overrides.push((k.to_string(), v.to_string()));
        } else {
            let v = it
                .next()
                .ok_or_else(|| Error::config(body, "override flag needs a value"))?;
            overrides.push((body.to_string(), v));
        }
    }
    Ok((rest, overrides))
}
