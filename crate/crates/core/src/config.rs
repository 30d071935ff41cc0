//! Run configuration: one versioned TOML file describing the world, model,
//! task, training, data, and output paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::sha256_hex;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::predictor::TaskKind;
use crate::scene::WorldConfig;
use crate::trainer::TrainSettings;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TaskSection {
    pub kind: TaskKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub dir: PathBuf,
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for DataSection {
    fn default() -> DataSection {
        DataSection {
            dir: PathBuf::from("data"),
            n_train: 200,
            n_eval: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> OutputSection {
        OutputSection {
            dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub version: u32,
    pub precision: Precision,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub task: TaskSection,
    pub train: TrainSettings,
    pub data: DataSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let de = toml::de::Deserializer::parse(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(format!("{}: {} ({})", path.display(), e.inner(), e.path())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every divisibility and consistency rule, checked before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.version != 0 && self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.world.validate()?;
        self.model.validate(self.task.kind)?;
        let obs = &self.model.observer;
        let (x, y, z) = self.world.grid.extents;
        let div = 1usize << obs.levels;
        if matches!(obs.variant, crate::layers::Variant::E4a)
            && (x % div != 0 || y % div != 0 || z % div != 0)
        {
            return Err(Error::config(format!(
                "grid extents ({x}, {y}, {z}) not divisible by 2^{}",
                obs.levels
            )));
        }
        let (wx, wy) = match obs.variant {
            crate::layers::Variant::E4a => (x / div, y / div),
            _ => (x, y),
        };
        if matches!(
            obs.variant,
            crate::layers::Variant::E4a | crate::layers::Variant::Dense
        ) && (wx % obs.window != 0 || wy % obs.window != 0)
        {
            return Err(Error::config(format!(
                "window {} does not divide the attention plane {wx}x{wy}",
                obs.window
            )));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.model.class_weights.len() < self.task.kind.classes() {
            return Err(Error::config("not enough class weights for the task"));
        }
        Ok(())
    }

    /// Content hash of the configuration, stable under key reordering in the
    /// file (canonical sorted-key JSON of the parsed structure).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canon = String::new();
        canonical_json(&value, &mut canon);
        sha256_hex(canon.as_bytes())
    }
}

fn canonical_json(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                canonical_json(&map[*k], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).unwrap()),
    }
}

/// Inventory of files a command produced, with content digests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(config_hash: &str, seed: u64) -> RunManifest {
        RunManifest {
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn add_file(&mut self, base: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let rel = path
            .strip_prefix(base)
            .unwrap_or(path)
            .display()
            .to_string();
        self.outputs.push(OutputFile {
            path: rel,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(&mut self, path: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn hash_is_stable_under_key_reordering() {
        let a: RunConfig = toml::from_str(
            "[world]\nt_obs = 3\nseed = 5\n[train]\nsteps = 10\n",
        )
        .unwrap();
        let b: RunConfig = toml::from_str(
            "[train]\nsteps = 10\n[world]\nseed = 5\nt_obs = 3\n",
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c: RunConfig = toml::from_str("[world]\nseed = 6\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_rejects_divisibility_violations() {
        let mut cfg = RunConfig::default();
        cfg.model.observer.levels = 4; // 8 / 16 is not integral
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = RunConfig::default();
        cfg.model.observer.window = 3; // does not divide the level-2 plane
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
