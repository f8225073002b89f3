use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use sta_core::model::StaConfig;
use sta_core::priors::SpikeChainConfig;
use sta_core::transforms::{default_spec, DatasetConfig, SpriteDistribution, TransformKind, TransformSpec};

use crate::error::{CliError, CliResult};

/// Keys that describe the data rather than the model.
const DATA_KEYS: [&str; 3] = ["transforms", "n", "sprites"];
const DEFAULT_N: usize = 1000;

/// A run configuration: one flat JSON object holding every `StaConfig` field
/// plus `transforms`, `n` and `sprites`. Canvas, steps, priors and seed are
/// shared between the model and the data.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: StaConfig,
    pub data: DatasetConfig,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TransformEntry {
    Kind(TransformKind),
    Spec(TransformSpec),
}

fn field<T: serde::de::DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> CliResult<Option<T>> {
    obj.remove(key)
        .map(|v| serde_json::from_value(v).map_err(|e| CliError::config(format!("config key '{key}': {e}"))))
        .transpose()
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::config(format!("config is not valid JSON: {e}")))?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::config("config must be a JSON object"));
    };
    let known = match serde_json::to_value(StaConfig::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("StaConfig serializes to an object"),
    };
    if let Some(k) = obj.keys().find(|k| !known.contains_key(*k) && !DATA_KEYS.contains(&k.as_str())) {
        return Err(CliError::config(format!("unknown config key '{k}'")));
    }

    let transforms: Vec<TransformSpec> = match field::<Vec<TransformEntry>>(&mut obj, "transforms")? {
        Some(list) => list
            .into_iter()
            .map(|e| match e {
                TransformEntry::Kind(k) => default_spec(k),
                TransformEntry::Spec(s) => s,
            })
            .collect(),
        None => vec![default_spec(TransformKind::TranslateX), default_spec(TransformKind::Scale)],
    };
    let n = field(&mut obj, "n")?.unwrap_or(DEFAULT_N);
    let sprites: SpriteDistribution = field(&mut obj, "sprites")?.unwrap_or_default();

    // K follows the transform list and the spike chain follows K unless given.
    if !obj.contains_key("fields") {
        obj.insert("fields".into(), Value::from(transforms.len()));
    }
    let has_spike = obj.contains_key("spike");
    let mut model: StaConfig =
        serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::config(format!("config: {e}")))?;
    if !has_spike {
        model.spike = SpikeChainConfig::new(model.fields);
    }
    if transforms.len() != model.fields {
        return Err(CliError::config(format!(
            "config lists {} transforms but fields = {}",
            transforms.len(),
            model.fields
        )));
    }
    let data = DatasetConfig {
        canvas: model.canvas,
        sprites,
        spike: model.spike.clone(),
        slab: model.slab.clone(),
        transforms,
        n,
        steps: model.steps,
        seed: model.seed,
    };
    model.validate()?;
    data.validate()?;
    Ok(RunConfig { model, data })
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| e.context(path.display()))
}

impl RunConfig {
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.model.seed = s;
            self.data.seed = s;
        }
        self
    }

    /// The resolved config as one flat object with sorted keys.
    pub fn to_json(&self) -> Value {
        let mut obj = match serde_json::to_value(&self.model) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("StaConfig serializes to an object"),
        };
        obj.insert("transforms".into(), serde_json::to_value(&self.data.transforms).unwrap_or_default());
        obj.insert("n".into(), Value::from(self.data.n));
        obj.insert("sprites".into(), serde_json::to_value(&self.data.sprites).unwrap_or_default());
        Value::Object(obj)
    }

    pub fn hash(&self) -> String {
        content_hash(&self.to_json())
    }
}

/// SHA-256 (hex) of a value's compact JSON text.
pub fn content_hash(value: &Value) -> String {
    hex(&Sha256::digest(value.to_string().as_bytes()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
