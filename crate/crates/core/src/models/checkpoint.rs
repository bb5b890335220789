//! Versioned JSON checkpoints: the full configuration plus every named
//! parameter tensor, restored value-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::config::ModelConfig;
use super::zoo::Model;
use super::ModelError;

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredParam {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    params: BTreeMap<String, StoredParam>,
}

pub fn save_checkpoint<S: Real>(model: &Model<S>, path: &Path) -> Result<(), ModelError> {
    let params = model
        .params
        .iter()
        .map(|(name, p)| {
            (
                name.clone(),
                StoredParam {
                    shape: p.shape().to_vec(),
                    values: p.values().iter().map(|v| v.to_f64_lossy()).collect(),
                },
            )
        })
        .collect();
    let ckpt = Checkpoint {
        version: VERSION,
        config: model.config.clone(),
        params,
    };
    fs::write(path, serde_json::to_vec_pretty(&ckpt)?)?;
    Ok(())
}

/// Rebuild the model from a checkpoint; every stored tensor must match a
/// parameter of the reconstructed architecture by name and shape, and cover
/// all of them.
pub fn load_checkpoint<S: Real>(path: &Path) -> Result<Model<S>, ModelError> {
    let ckpt: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
    if ckpt.version != VERSION {
        return Err(ModelError::CheckpointVersion {
            found: ckpt.version,
            expected: VERSION,
        });
    }
    // the init RNG is irrelevant, every value gets overwritten below
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model: Model<S> = Model::new(ckpt.config, &mut rng);
    let expected = model.params.len();
    if expected != ckpt.params.len() {
        return Err(ModelError::CheckpointParams(format!(
            "expected {expected} tensors, found {}",
            ckpt.params.len()
        )));
    }
    for (name, stored) in &ckpt.params {
        let param = model
            .params
            .get(name)
            .ok_or_else(|| ModelError::CheckpointParams(format!("unknown tensor {name:?}")))?;
        if param.shape() != stored.shape.as_slice() {
            return Err(ModelError::CheckpointParams(format!(
                "tensor {name:?} has shape {:?}, expected {:?}",
                stored.shape,
                param.shape()
            )));
        }
        param.set_values(stored.values.iter().map(|&v| S::of(v)).collect());
    }
    Ok(model)
}
