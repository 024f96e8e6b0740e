//! Checkpoint persistence.
//!
//! Binary container, little-endian:
//!
//! ```text
//! magic    4 bytes  "KWSC"
//! version  u32      currently 1
//! config   u32 byte length + JSON-encoded EncoderConfig
//! tensors  u32 count, then per tensor:
//!          u32 name length + UTF-8 name,
//!          u32 rank + rank x u64 dims,
//!          f32 values
//! ```
//!
//! Round-trips are bit-exact: save(load(x)) reproduces x byte for byte.

use std::fs;
use std::path::Path;

use crate::tensor::Tensor;

use super::{BlockParams, EncoderConfig, EncoderError, EncoderParams};

const MAGIC: &[u8; 4] = b"KWSC";
const VERSION: u32 = 1;

/// A config plus named single-precision tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    /// Capture encoder parameters (including running statistics) and an
    /// optional classifier head.
    pub fn from_params(
        config: &EncoderConfig,
        params: &EncoderParams<f32>,
        head: Option<&Tensor<f32>>,
    ) -> Self {
        let mut tensors = vec![("first_conv".to_string(), params.first_conv.clone())];
        for (i, b) in params.blocks.iter().enumerate() {
            tensors.push((format!("block{i}.conv1"), b.conv1.clone()));
            tensors.push((format!("block{i}.conv2"), b.conv2.clone()));
            tensors.push((format!("block{i}.gamma"), b.gamma.clone()));
            tensors.push((format!("block{i}.beta"), b.beta.clone()));
            tensors.push((format!("block{i}.running_mean"), b.running_mean.clone()));
            tensors.push((format!("block{i}.running_var"), b.running_var.clone()));
        }
        if let Some(w) = head {
            tensors.push(("head.weight".to_string(), w.clone()));
        }
        Self {
            config: config.clone(),
            tensors,
        }
    }

    fn named(&self, name: &str) -> Result<&Tensor<f32>, EncoderError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| EncoderError::MalformedCheckpoint(format!("missing tensor {name:?}")))
    }

    /// Rebuild encoder parameters and the head, if one was stored.
    pub fn to_params(&self) -> Result<(EncoderParams<f32>, Option<Tensor<f32>>), EncoderError> {
        let first_conv = self.named("first_conv")?.clone();
        let mut blocks = Vec::with_capacity(self.config.n_res_blocks);
        for i in 0..self.config.n_res_blocks {
            blocks.push(BlockParams {
                conv1: self.named(&format!("block{i}.conv1"))?.clone(),
                conv2: self.named(&format!("block{i}.conv2"))?.clone(),
                gamma: self.named(&format!("block{i}.gamma"))?.clone(),
                beta: self.named(&format!("block{i}.beta"))?.clone(),
                running_mean: self.named(&format!("block{i}.running_mean"))?.clone(),
                running_var: self.named(&format!("block{i}.running_var"))?.clone(),
            });
        }
        let head = self
            .tensors
            .iter()
            .find(|(n, _)| n == "head.weight")
            .map(|(_, t)| t.clone());
        Ok((EncoderParams { first_conv, blocks }, head))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), EncoderError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config =
        serde_json::to_vec(&ckpt.config).map_err(|e| EncoderError::MalformedCheckpoint(e.to_string()))?;
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, EncoderError> {
    let bytes = fs::read(path)?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8], EncoderError> {
        let s = bytes
            .get(*off..*off + n)
            .ok_or_else(|| EncoderError::MalformedCheckpoint("unexpected end of file".into()))?;
        *off += n;
        Ok(s)
    };
    let u32_at = |off: &mut usize| -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()))
    };

    if take(&mut off, 4)? != MAGIC {
        return Err(EncoderError::MalformedCheckpoint("bad magic".into()));
    }
    let version = u32_at(&mut off)?;
    if version != VERSION {
        return Err(EncoderError::MalformedCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let clen = u32_at(&mut off)? as usize;
    let config: EncoderConfig = serde_json::from_slice(take(&mut off, clen)?)
        .map_err(|e| EncoderError::MalformedCheckpoint(e.to_string()))?;

    let count = u32_at(&mut off)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = u32_at(&mut off)? as usize;
        let name = std::str::from_utf8(take(&mut off, nlen)?)
            .map_err(|_| EncoderError::MalformedCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = u32_at(&mut off)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let data = take(&mut off, len * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)));
    }
    if off != bytes.len() {
        return Err(EncoderError::MalformedCheckpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { config, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("kws-ckpt-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_bit_identical() {
        let cfg = EncoderConfig::res_small();
        let params = init_params::<f32>(&cfg, 3);
        let head = Tensor::from_vec(&[2, 16], vec![0.5f32; 32]);
        let ckpt = Checkpoint::from_params(&cfg, &params, Some(&head));
        let path = tmp("a.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);

        let path2 = tmp("b.ckpt");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());

        let (restored, restored_head) = loaded.to_params().unwrap();
        assert_eq!(restored, params);
        assert_eq!(restored_head.unwrap(), head);
    }

    #[test]
    fn headless_roundtrip() {
        let cfg = EncoderConfig::res_small();
        let params = init_params::<f32>(&cfg, 9);
        let ckpt = Checkpoint::from_params(&cfg, &params, None);
        let path = tmp("c.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let (restored, head) = load_checkpoint(&path).unwrap().to_params().unwrap();
        assert_eq!(restored, params);
        assert!(head.is_none());
    }

    #[test]
    fn garbage_rejected() {
        let path = tmp("garbage.ckpt");
        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(EncoderError::MalformedCheckpoint(_))
        ));
    }

    #[test]
    fn missing_tensor_rejected() {
        let cfg = EncoderConfig::res_small();
        let params = init_params::<f32>(&cfg, 1);
        let mut ckpt = Checkpoint::from_params(&cfg, &params, None);
        ckpt.tensors.retain(|(n, _)| n != "block1.conv2");
        assert!(matches!(
            ckpt.to_params(),
            Err(EncoderError::MalformedCheckpoint(_))
        ));
    }
}
