//! Checkpoint file: one line of UTF-8 JSON manifest, then the parameter
//! payload as little-endian f32 arrays concatenated in lexicographic name
//! order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Parameters};

pub const CHECKPOINT_MAGIC: &str = "CSICK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub config: ModelConfig,
    pub config_hash: String,
    pub parameter_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub name: String,
    pub model: String,
    pub config: AdamConfig,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub magic: String,
    pub step: u64,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub optimizers: Vec<OptimizerEntry>,
    pub arrays: Vec<ArrayEntry>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Collects models and optimizer states before writing them out.
pub struct CheckpointBuilder {
    step: u64,
    models: Vec<ModelEntry>,
    optimizers: Vec<OptimizerEntry>,
    arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    extra: serde_json::Value,
}

impl CheckpointBuilder {
    pub fn new(step: u64) -> Self {
        Self {
            step,
            models: Vec::new(),
            optimizers: Vec::new(),
            arrays: BTreeMap::new(),
            extra: serde_json::Value::Null,
        }
    }

    /// Adds the parameters of a model under `name/<param>`.
    pub fn add_model(&mut self, name: &str, config: &ModelConfig, model: &impl Parameters<f32>) -> &mut Self {
        self.models.push(ModelEntry {
            name: name.to_string(),
            config: config.clone(),
            config_hash: config.config_hash(),
            parameter_count: model.num_params() as u64,
        });
        for p in model.params() {
            self.arrays
                .insert(format!("{name}/{}", p.name), (p.shape.clone(), p.data.to_vec()));
        }
        self
    }

    /// Adds an optimizer whose moment buffers follow the parameter order of `params`.
    pub fn add_optimizer(
        &mut self,
        name: &str,
        model: &str,
        adam: &Adam<f32>,
        params: &impl Parameters<f32>,
    ) -> &mut Self {
        self.optimizers.push(OptimizerEntry {
            name: name.to_string(),
            model: model.to_string(),
            config: adam.config,
            step: adam.step,
        });
        for ((p, m), v) in params.params().into_iter().zip(&adam.m).zip(&adam.v) {
            self.arrays
                .insert(format!("{name}/m/{}", p.name), (p.shape.clone(), m.clone()));
            self.arrays
                .insert(format!("{name}/v/{}", p.name), (p.shape.clone(), v.clone()));
        }
        self
    }

    pub fn extra(&mut self, extra: serde_json::Value) -> &mut Self {
        self.extra = extra;
        self
    }

    pub fn build(self) -> Checkpoint {
        Checkpoint {
            manifest: CheckpointManifest {
                magic: CHECKPOINT_MAGIC.into(),
                step: self.step,
                models: self.models,
                optimizers: self.optimizers,
                arrays: self
                    .arrays
                    .iter()
                    .map(|(name, (shape, _))| ArrayEntry {
                        name: name.clone(),
                        shape: shape.clone(),
                    })
                    .collect(),
                extra: self.extra,
            },
            arrays: self
                .arrays
                .into_iter()
                .map(|(name, (_, data))| (name, data))
                .collect(),
        }
    }

    pub fn save(self, path: impl AsRef<Path>) -> Result<()> {
        self.build().save(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub arrays: BTreeMap<String, Vec<f32>>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.manifest)?;
        w.write_all(b"\n")?;
        for entry in &self.manifest.arrays {
            for v in &self.arrays[&entry.name] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(format!("{}", path.display())),
            _ => Error::Io(e),
        })?;
        let mut r = BufReader::new(file);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.pop() != Some(b'\n') {
            return Err(Error::CorruptHeader("manifest is not newline-terminated".into()));
        }
        let manifest: CheckpointManifest = serde_json::from_slice(&line)
            .map_err(|e| Error::CorruptHeader(format!("unparseable manifest: {e}")))?;
        if manifest.magic != CHECKPOINT_MAGIC {
            return Err(Error::CorruptHeader(format!("bad checkpoint magic '{}'", manifest.magic)));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected: usize = manifest
            .arrays
            .iter()
            .map(|a| a.shape.iter().product::<usize>() * 4)
            .sum();
        if payload.len() != expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        let mut arrays = BTreeMap::new();
        let mut offset = 0;
        for entry in &manifest.arrays {
            let n = entry.shape.iter().product::<usize>() * 4;
            let values = payload[offset..offset + n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.insert(entry.name.clone(), values);
            offset += n;
        }
        Ok(Self { manifest, arrays })
    }

    pub fn model_entry(&self, name: &str) -> Result<&ModelEntry> {
        self.manifest
            .models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::MissingArtifact(format!("checkpoint has no model '{name}'")))
    }

    /// Copies the stored parameters of `name` into `model`, whose config
    /// must hash to the stored config hash.
    pub fn restore_into(&self, name: &str, config: &ModelConfig, model: &mut impl Parameters<f32>) -> Result<()> {
        let entry = self.model_entry(name)?;
        if entry.config_hash != config.config_hash() {
            return Err(Error::Incompatible(format!(
                "model '{name}' was saved with config hash {} but the target has {}",
                entry.config_hash,
                config.config_hash()
            )));
        }
        self.copy_arrays(name, model)
    }

    fn copy_arrays(&self, prefix: &str, target: &mut impl Parameters<f32>) -> Result<()> {
        for (pname, data) in target.params_mut() {
            let key = format!("{prefix}/{pname}");
            let src = self
                .arrays
                .get(&key)
                .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks array '{key}'")))?;
            if src.len() != data.len() {
                return Err(Error::Incompatible(format!(
                    "array '{key}' has {} values, target expects {}",
                    src.len(),
                    data.len()
                )));
            }
            data.copy_from_slice(src);
        }
        Ok(())
    }

    /// Rebuilds the model `name` from its stored config and parameters.
    pub fn load_model(&self, name: &str) -> Result<Model<f32>> {
        let entry = self.model_entry(name)?;
        let mut model = build_model::<f32>(&entry.config, 0)?;
        self.copy_arrays(name, &mut model)?;
        Ok(model)
    }

    /// Restores an optimizer saved with [`CheckpointBuilder::add_optimizer`].
    pub fn load_optimizer(&self, name: &str, params: &impl Parameters<f32>) -> Result<Adam<f32>> {
        let entry = self
            .manifest
            .optimizers
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::MissingArtifact(format!("checkpoint has no optimizer '{name}'")))?;
        let mut adam = Adam::new(entry.config, params);
        adam.step = entry.step;
        for ((p, m), v) in params.params().into_iter().zip(adam.m.iter_mut()).zip(adam.v.iter_mut()) {
            for (buf, kind) in [(m, "m"), (v, "v")] {
                let key = format!("{name}/{kind}/{}", p.name);
                let src = self
                    .arrays
                    .get(&key)
                    .ok_or_else(|| Error::Incompatible(format!("checkpoint lacks array '{key}'")))?;
                if src.len() != buf.len() {
                    return Err(Error::Incompatible(format!("optimizer array '{key}' has wrong length")));
                }
                buf.copy_from_slice(src);
            }
        }
        Ok(adam)
    }
}
