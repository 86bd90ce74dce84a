//! Versioned JSON checkpoints of named tensors plus string metadata.
//!
//! f64 values are serialized with shortest-round-trip formatting, so a
//! save/load cycle reproduces every bit of every finite value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint has no tensor named {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {found:?}, expected rank 1 or 2")]
    BadShape { name: String, found: Vec<usize> },
    #[error("checkpoint has no metadata key {0}")]
    MissingMeta(String),
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// A named-tensor container with a version tag and free-form string metadata.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct Checkpoint {
    version: u32,
    pub meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, TensorRecord>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint::new()
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            meta: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: &Tensor) {
        let shape = match tensor.shape() {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        };
        self.tensors.insert(
            name.to_string(),
            TensorRecord {
                shape,
                data: tensor.data().to_vec(),
            },
        );
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor, CheckpointError> {
        let rec = self
            .tensors
            .get(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        match rec.shape.as_slice() {
            [n] => {
                assert_eq!(rec.data.len(), *n, "corrupt record {name}");
                Ok(Tensor::vector(rec.data.clone()))
            }
            [r, c] => Ok(Tensor::matrix(*r, *c, rec.data.clone())),
            other => Err(CheckpointError::BadShape {
                name: name.to_string(),
                found: other.to_vec(),
            }),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn meta_value(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| CheckpointError::MissingMeta(key.to_string()))
    }

    /// Captures every parameter in the store under its registered name.
    pub fn from_store(store: &ParamStore) -> Self {
        let mut ckpt = Checkpoint::new();
        for id in store.ids() {
            ckpt.insert(store.name(id), store.value(id));
        }
        ckpt
    }

    /// Overwrites store parameter values from same-named tensors. Every store
    /// parameter must be present with a matching shape.
    pub fn apply_to_store(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let tensor = self.tensor(&name)?;
            assert_eq!(
                tensor.shape(),
                store.value(id).shape(),
                "checkpoint tensor {name} shape mismatch"
            );
            *store.value_mut(id) = tensor;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: ckpt.version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(4242);
        let mut ckpt = Checkpoint::new();
        let mut awkward = Tensor::uniform(Shape::Matrix(7, 3), 1e3, &mut rng);
        awkward.set(0, -0.0);
        awkward.set(1, f64::MIN_POSITIVE);
        awkward.set(2, 1.0 / 3.0);
        ckpt.insert("w", &awkward);
        ckpt.insert("b", &Tensor::vector(vec![1e-300, 2.0_f64.powi(-60)]));
        ckpt.meta.insert("kind".into(), "test".into());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        let w = loaded.tensor("w").unwrap();
        assert_eq!(w.shape(), awkward.shape());
        for (a, b) in w.data().iter().zip(awkward.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(loaded.meta_value("kind").unwrap(), "test");
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"version":99,"meta":{},"tensors":{}}"#).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(matches!(err, CheckpointError::Version { found: 99, .. }));
    }

    #[test]
    fn store_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.register("layer.w", Tensor::uniform(Shape::Matrix(2, 4), 0.3, &mut rng));
        store.register("layer.b", Tensor::uniform(Shape::Vector(2), 0.3, &mut rng));
        let snapshot = store.snapshot();

        let ckpt = Checkpoint::from_store(&store);
        // Wipe and restore through the checkpoint.
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        ckpt.apply_to_store(&mut store).unwrap();
        assert_eq!(store.snapshot(), snapshot);
    }

    #[test]
    fn missing_tensor_named_in_error() {
        let ckpt = Checkpoint::new();
        let err = ckpt.tensor("nope").unwrap_err();
        assert_eq!(err.to_string(), "checkpoint has no tensor named nope");
    }
}
