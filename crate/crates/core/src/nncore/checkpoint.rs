//! Checkpoint layout: `manifest.json` (names, shapes, seed, step, free-form
//! metadata) and one raw little-endian `f64` blob per parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamStore, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub seed: u64,
    pub step: u64,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint(
    dir: &Path,
    store: &ParamStore,
    seed: u64,
    step: u64,
    metadata: serde_json::Value,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir)?;
    let mut params = Vec::with_capacity(store.len());
    for (i, (name, tensor)) in store.iter().enumerate() {
        let file = format!("{i:03}.bin");
        let bytes: Vec<u8> = tensor.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join(&file), bytes)?;
        params.push(ParamEntry {
            name: name.to_owned(),
            shape: [tensor.rows(), tensor.cols()],
            file,
        });
    }
    let manifest = CheckpointManifest {
        seed,
        step,
        params,
        metadata,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(ParamStore, CheckpointManifest)> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut store = ParamStore::new();
    for entry in &manifest.params {
        let bytes = fs::read(dir.join(&entry.file))?;
        let [rows, cols] = entry.shape;
        if bytes.len() != rows * cols * 8 {
            return Err(NnError::Checkpoint(format!(
                "{} holds {} bytes, expected {}",
                entry.file,
                bytes.len(),
                rows * cols * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add(entry.name.clone(), Tensor::new(rows, cols, data)?);
    }
    Ok((store, manifest))
}
