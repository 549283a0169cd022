use std::fs;
use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};
use skelrig::density::DensityParams;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::model::Model;
use crate::shape::ShapeEncoderConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SKELARM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header written ahead of the raw little-endian f32 arrays, which
/// follow in `tensors` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: ModelConfig,
    pub shape_encoder: ShapeEncoderConfig,
    pub density: Option<DensityParams>,
    pub tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub model: Model,
    pub shape_encoder: ShapeEncoderConfig,
    pub density: Option<DensityParams>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    shape_encoder: &ShapeEncoderConfig,
    density: Option<&DensityParams>,
) -> Result<()> {
    let vars = model.params().vars();
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        config: *model.config(),
        shape_encoder: *shape_encoder,
        density: density.cloned(),
        tensors: vars
            .iter()
            .map(|(name, v)| TensorEntry {
                name: name.clone(),
                shape: v.dims().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(header.len() + 4 * model.parameter_count() + 32);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in vars.values() {
        for x in v.flatten_all()?.to_vec1::<f32>()? {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let bad = |s: &str| ModelError::Checkpoint(s.to_string());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let manifest: Manifest = serde_json::from_slice(header)?;
    let model = Model::new(manifest.config, 0)?;
    let vars = model.params().vars();
    if vars.len() != manifest.tensors.len() {
        return Err(ModelError::Checkpoint(format!(
            "{} tensors stored, model has {}",
            manifest.tensors.len(),
            vars.len()
        )));
    }
    let mut at = 20 + hlen;
    for entry in &manifest.tensors {
        let var = vars
            .get(&entry.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor {}", entry.name)))?;
        if var.dims() != entry.shape.as_slice() {
            return Err(ModelError::Checkpoint(format!(
                "{}: stored shape {:?}, model expects {:?}",
                entry.name,
                entry.shape,
                var.dims()
            )));
        }
        let n: usize = entry.shape.iter().product();
        let raw = bytes.get(at..at + 4 * n).ok_or_else(|| bad("truncated tensor data"))?;
        let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        var.set(&Tensor::from_vec(data, entry.shape.as_slice(), model.device())?)?;
        at += 4 * n;
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(Checkpoint {
        model,
        shape_encoder: manifest.shape_encoder,
        density: manifest.density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClsKind, ConditionBundle};

    fn cfg() -> ModelConfig {
        ModelConfig {
            width: 8,
            layers: 1,
            heads: 2,
            context: 16,
            positions: 16,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_restores_logits() {
        let m = Model::new(cfg(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let enc = ShapeEncoderConfig {
            width: 8,
            ..Default::default()
        };
        save_checkpoint(&path, &m, &enc, None).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.shape_encoder, enc);
        let b = ConditionBundle::new(vec![0.3; 8], ClsKind::HumanoidWithAux, vec![0.1; 8]);
        let t = [256u32, 258, 3, 4];
        let x = m.forward(&t, &b).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let y = back.model.forward(&t, &b).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        fs::write(&path, b"hello world, not a model").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));
        let m = Model::new(cfg(), 1).unwrap();
        save_checkpoint(&path, &m, &ShapeEncoderConfig::default(), None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));
    }
}
