//! Checkpoint file format.
//!
//! Layout: magic `SSEPCKPT`, u32 version, u64 JSON header length, JSON
//! header, then raw little-endian f64 blobs. The header carries the full
//! model config, the parameter table (name + shape, in blob order), an
//! optional trainer-state section, and flags for optimizer-moment blobs.
//! Parameter values come first, then (when present) Adam first and second
//! moments in the same order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

use super::config::ModelConfig;
use super::model::SepModel;
use super::params::ParamSet;
use super::SepError;

const MAGIC: &[u8; 8] = b"SSEPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

/// Optimizer and schedule state needed for exact resumption.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct TrainerState {
    pub stage: u8,
    pub epoch: usize,
    pub global_step: usize,
    pub adam_step: usize,
    pub lr: f64,
    pub best_val_loss: Option<f64>,
    pub val_history: Vec<f64>,
    pub stall_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    params: Vec<ParamEntry>,
    has_optimizer_moments: bool,
    trainer: Option<TrainerState>,
}

/// Adam moment vectors keyed like the parameter set.
#[derive(Debug, Clone, Default)]
pub struct OptimizerMoments {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

pub struct Checkpoint {
    pub model: SepModel,
    pub moments: Option<OptimizerMoments>,
    pub trainer: Option<TrainerState>,
}

fn io_err(path: &Path, e: std::io::Error) -> SepError {
    SepError::CheckpointIo { path: path.display().to_string(), source: e }
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &SepModel,
    moments: Option<&OptimizerMoments>,
    trainer: Option<&TrainerState>,
) -> Result<(), SepError> {
    let path = path.as_ref();
    let header = Header {
        format_version: VERSION,
        config: model.config.clone(),
        params: model
            .params
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec() })
            .collect(),
        has_optimizer_moments: moments.is_some(),
        trainer: trainer.cloned(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut write_blob = |t: &Tensor| {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for p in model.params.iter() {
        write_blob(&p.value);
    }
    if let Some(m) = moments {
        for t in &m.m {
            write_blob(t);
        }
        for t in &m.v {
            write_blob(t);
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, SepError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;

    let fail = |detail: String| SepError::CheckpointFormat { path: path.display().to_string(), detail };
    if bytes.len() < 20 || &bytes[0..8] != MAGIC {
        return Err(fail("missing checkpoint magic".to_string()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(fail(format!("unsupported version {}", version)));
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if 20 + json_len > bytes.len() {
        return Err(fail("truncated header".to_string()));
    }
    let header: Header =
        serde_json::from_slice(&bytes[20..20 + json_len]).map_err(|e| fail(format!("header: {}", e)))?;

    let mut model = SepModel::new(header.config)?;
    {
        // The freshly built model must agree with the stored table.
        let built: Vec<ParamEntry> = model
            .params
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec() })
            .collect();
        if built.len() != header.params.len()
            || built
                .iter()
                .zip(&header.params)
                .any(|(a, b)| a.name != b.name || a.shape != b.shape)
        {
            return Err(fail("parameter table does not match the stored config".to_string()));
        }
    }

    let mut cursor = 20 + json_len;
    let read_blob = |shape: &[usize], cursor: &mut usize| -> Result<Tensor, SepError> {
        let n: usize = shape.iter().product();
        let need = n * 8;
        if *cursor + need > bytes.len() {
            return Err(fail("truncated parameter data".to_string()));
        }
        let data: Vec<f64> = bytes[*cursor..*cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *cursor += need;
        Ok(Tensor::new(shape.to_vec(), data)?)
    };

    let shapes: Vec<Vec<usize>> = header.params.iter().map(|p| p.shape.clone()).collect();
    for (p, shape) in model.params.iter_mut().zip(&shapes) {
        p.value = read_blob(shape, &mut cursor)?;
    }
    let moments = if header.has_optimizer_moments {
        let mut m = Vec::with_capacity(shapes.len());
        let mut v = Vec::with_capacity(shapes.len());
        for shape in &shapes {
            m.push(read_blob(shape, &mut cursor)?);
        }
        for shape in &shapes {
            v.push(read_blob(shape, &mut cursor)?);
        }
        Some(OptimizerMoments { m, v })
    } else {
        None
    };
    if cursor != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - cursor)));
    }
    Ok(Checkpoint { model, moments, trainer: header.trainer })
}

/// Convenience for optimizer state sized like a parameter set.
pub fn zero_moments(params: &ParamSet) -> OptimizerMoments {
    OptimizerMoments {
        m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sep::config::SepConfig;

    fn small_model() -> SepModel {
        let cfg = ModelConfig {
            sep: SepConfig { channels: 8, kernel: 8, stride: 4, chunk: 6, heads: 2, ff_dim: 16, ..SepConfig::default() },
            ..ModelConfig::default()
        };
        SepModel::new(cfg).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let model = small_model();
        let mut moments = zero_moments(&model.params);
        moments.m[0].data_mut()[0] = 0.125;
        let trainer = TrainerState { stage: 1, epoch: 3, global_step: 41, adam_step: 41, lr: 2e-4, ..Default::default() };
        save_checkpoint(&p, &model, Some(&moments), Some(&trainer)).unwrap();

        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.model.config, model.config);
        for (a, b) in loaded.model.params.iter().zip(model.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        let lm = loaded.moments.unwrap();
        assert_eq!(lm.m[0].data()[0], 0.125);
        assert_eq!(loaded.trainer.unwrap(), trainer);
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let model = small_model();
        save_checkpoint(&p, &model, None, None).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(SepError::CheckpointFormat { .. })));
    }

    #[test]
    fn rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let model = small_model();
        save_checkpoint(&p, &model, None, None).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
