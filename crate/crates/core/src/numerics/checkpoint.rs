//! Named-tensor archive: `manifest.json` plus a raw little-endian
//! float64 buffer `tensors.bin`, written into one directory.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use crate::numerics::NumericsError;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSOR_FILE: &str = "tensors.bin";
const FORMAT: &str = "kestance-tensors";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Offset into `tensors.bin`, in elements.
    pub offset: usize,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<TensorRecord>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    store: &ParamStore<T>,
    metadata: serde_json::Value,
) -> Result<(), NumericsError> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(store.len());
    let mut buf = Vec::with_capacity(store.num_values() * 8);
    let mut offset = 0;
    for (name, e) in store.iter() {
        for v in e.value.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        records.push(TensorRecord {
            name: name.to_string(),
            shape: e.value.shape().to_vec(),
            trainable: e.trainable,
            offset,
            count: e.value.len(),
        });
        offset += e.value.len();
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: 1,
        tensors: records,
        metadata,
    };
    fs::File::create(dir.join(TENSOR_FILE))?.write_all(&buf)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(ParamStore<T>, serde_json::Value), NumericsError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| NumericsError::Checkpoint(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(NumericsError::Checkpoint(format!("unexpected format {:?}", manifest.format)));
    }
    let bytes = fs::read(dir.join(TENSOR_FILE))?;
    let mut store = ParamStore::new();
    for rec in &manifest.tensors {
        let (start, end) = (rec.offset * 8, (rec.offset + rec.count) * 8);
        if end > bytes.len() || rec.shape.iter().product::<usize>() != rec.count {
            return Err(NumericsError::Checkpoint(format!("tensor {} is truncated or misshaped", rec.name)));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        store.insert(rec.name.clone(), Tensor::from_vec(&rec.shape, data)?, rec.trainable);
    }
    Ok((store, manifest.metadata))
}
