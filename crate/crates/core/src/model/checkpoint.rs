//! JSON checkpointing with versioning.
//!
//! The document holds the format version, resolved config, normalization
//! statistics, optimizer step counter, every named parameter as
//! `{name, shape, row-major data}`, and the Adam moments per parameter.
//! Serialization uses shortest round-trip float formatting, so
//! save -> load -> save is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureStats;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::{ModelConfig, ParamSet};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Normalization statistics fit on the training split, embedded so
    /// prediction on new data is self-contained.
    pub stats: FeatureStats,
    pub step: u64,
    pub best_epoch: usize,
    pub params: Vec<NamedTensorEntry>,
    pub moments: Vec<MomentEntry>,
}

impl Checkpoint {
    pub fn from_params(
        config: &ModelConfig,
        ps: &ParamSet,
        stats: &FeatureStats,
        best_epoch: usize,
    ) -> Checkpoint {
        let mut params = Vec::new();
        let mut moments = Vec::new();
        for (name, p) in ps.named() {
            params.push(NamedTensorEntry {
                name: name.to_string(),
                shape: p.value.shape.clone(),
                data: p.value.data.clone(),
            });
            moments.push(MomentEntry {
                name: name.to_string(),
                m: p.m.clone(),
                v: p.v.clone(),
            });
        }
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: config.clone(),
            stats: stats.clone(),
            step: ps.step,
            best_epoch,
            params,
            moments,
        }
    }

    /// Validates names and shapes against the embedded config and rebuilds
    /// the parameter set.
    pub fn to_params(&self) -> Result<ParamSet> {
        let entries: Vec<(String, Tensor, Vec<f64>, Vec<f64>)> = self
            .params
            .iter()
            .map(|e| {
                let tensor = Tensor::new(e.shape.clone(), e.data.clone()).map_err(|_| {
                    Error::Checkpoint(format!(
                        "parameter {}: shape {:?} does not match {} data values",
                        e.name,
                        e.shape,
                        e.data.len()
                    ))
                })?;
                let moment = self
                    .moments
                    .iter()
                    .find(|m| m.name == e.name)
                    .ok_or_else(|| {
                        Error::Checkpoint(format!("missing moments for parameter {}", e.name))
                    })?;
                Ok((e.name.clone(), tensor, moment.m.clone(), moment.v.clone()))
            })
            .collect::<Result<_>>()?;
        ParamSet::restore(&self.config, &entries, self.step)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, ckpt)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Loads a checkpoint, rejecting unknown format versions and any parameter
/// whose shape disagrees with the embedded config.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} is not supported (reader expects {})",
            ckpt.format_version, CHECKPOINT_FORMAT_VERSION
        )));
    }
    ckpt.config.validate()?;
    ckpt.to_params()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_checkpoint() -> Checkpoint {
        let cfg = ModelConfig {
            hidden: 6,
            chunk: 2,
            window: 3,
            bottleneck: 3,
            ..ModelConfig::with_features(3)
        };
        let ps = ParamSet::init(&cfg).unwrap();
        let stats = FeatureStats {
            mean: vec![0.0; 3],
            std: vec![1.0; 3],
        };
        Checkpoint::from_params(&cfg, &ps, &stats, 0)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let ckpt = small_checkpoint();
        save_checkpoint(&ckpt, &a).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        save_checkpoint(&loaded, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        // Arrays round-trip bit-exactly.
        let ps = ckpt.to_params().unwrap();
        let ps2 = loaded.to_params().unwrap();
        assert_eq!(ps, ps2);
    }

    #[test]
    fn edited_shape_is_rejected_naming_the_parameter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ckpt = small_checkpoint();
        ckpt.params[0].shape = vec![2, 2];
        save_checkpoint(&ckpt, &path).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("w_mf"), "{err}");
    }

    #[test]
    fn future_format_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut ckpt = small_checkpoint();
        ckpt.format_version = 0;
        save_checkpoint(&ckpt, &path).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        std::fs::write(&path, "{oops").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse(_))));
    }
}
