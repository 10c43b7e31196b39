//! Command-line run configuration: one JSON document, defaults for every key,
//! and `--set dotted.path=value` overrides on top.
//!
//! Training keys sit at the top level (`epochs`, `loss.beta`, `model.latent_dim`);
//! evaluation, synthetic-world, sweep and data-loading keys live under
//! `metrics`, `synth`, `sweep` and `data`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datamodel::{InteractionFormat, LoadOptions};
use crate::error::{Error, Result};
use crate::metrics::MetricConfig;
use crate::synthworld::SynthConfig;
use crate::trainer::TrainConfig;

/// Grid for the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub betas: Vec<f64>,
    pub rhos: Vec<f64>,
    /// Each seed sets both the training and the initialization seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            betas: vec![0.0, 0.1, 0.2, 0.5],
            rhos: vec![0.1],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Binary,
    Rated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DataFormat,
    /// Ratings at or above this count as adoptions when `format = rated`.
    pub rating_threshold: f64,
    pub min_interactions: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: DataFormat::Binary,
            rating_threshold: 4.0,
            min_interactions: 5,
        }
    }
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: match self.format {
                DataFormat::Binary => InteractionFormat::Binary,
                DataFormat::Rated => InteractionFormat::Rated {
                    threshold: self.rating_threshold,
                },
            },
            min_interactions: self.min_interactions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    pub synth: SynthConfig,
    pub sweep: SweepGrid,
    pub data: DataConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl CliConfig {
    pub fn to_value(&self) -> Value {
        let mut v = serde_json::to_value(&self.train).expect("serializable");
        let obj = v.as_object_mut().expect("train config is an object");
        obj.insert("metrics".into(), serde_json::to_value(&self.metrics).expect("serializable"));
        obj.insert("synth".into(), serde_json::to_value(&self.synth).expect("serializable"));
        obj.insert("sweep".into(), serde_json::to_value(&self.sweep).expect("serializable"));
        obj.insert("data".into(), serde_json::to_value(&self.data).expect("serializable"));
        v
    }

    pub fn from_value(value: Value) -> Result<CliConfig> {
        let Value::Object(mut obj) = value else {
            return Err(config_err("configuration must be a JSON object"));
        };
        fn section<T: serde::de::DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<T> {
            let v = obj.remove(key).unwrap_or_else(|| Value::Object(Map::new()));
            if !v.is_object() {
                return Err(config_err(format!("`{key}` must be an object")));
            }
            serde_json::from_value(v).map_err(|e| config_err(format!("{key}: {e}")))
        }
        Ok(CliConfig {
            metrics: section(&mut obj, "metrics")?,
            synth: section(&mut obj, "synth")?,
            sweep: section(&mut obj, "sweep")?,
            data: section(&mut obj, "data")?,
            train: serde_json::from_value(Value::Object(obj)).map_err(|e| config_err(e.to_string()))?,
        })
    }

    /// Defaults, then the optional JSON file, then each `key=value` override in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<CliConfig> {
        let mut value = CliConfig::default().to_value();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            merge_known(&mut value, patch, "")?;
        }
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let cfg = CliConfig::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.metrics.validate()?;
        self.synth.validate()?;
        if self.sweep.betas.is_empty() || self.sweep.rhos.is_empty() || self.sweep.seeds.is_empty() {
            return Err(config_err("sweep grid lists must be non-empty"));
        }
        if self.data.min_interactions == 0 {
            return Err(config_err("data.min_interactions must be at least 1"));
        }
        Ok(())
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Recursive merge that rejects keys the defaults do not have.
fn merge_known(base: &mut Value, patch: Value, prefix: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let path = join(prefix, &k);
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| config_err(format!("unknown configuration key `{path}`")))?;
                merge_known(slot, v, &path)?;
            }
            Ok(())
        }
        (Value::Object(_), _) => Err(config_err(format!("`{prefix}` must be an object"))),
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn apply_override(value: &mut Value, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{item}`")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::Usage(format!("--set has an empty key in `{item}`")));
    }
    // JSON literals first, so numbers, booleans, null and arrays keep their type
    let parsed = serde_json::from_str::<Value>(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = parsed;
    for key in path.rsplit('.') {
        let mut m = Map::new();
        m.insert(key.to_string(), patch);
        patch = Value::Object(m);
    }
    merge_known(value, patch, "")
}
