//! Checkpoint container: magic, u64 LE manifest length, JSON manifest, LE f32 blob.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ModelParams, ParamKind, Tensor};
use crate::error::{Error, Result};
use crate::util::{f32_from_le_bytes, f32_to_le_bytes};

pub const MAGIC: &[u8; 8] = b"BRNTCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the blob.
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    /// Free-form training metadata (seeds, epoch, validation scores).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams<f32>, metadata: serde_json::Value) -> Result<Self> {
        params.check_layout(&config)?;
        Ok(Checkpoint {
            config,
            params,
            metadata,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let tensors = self
            .params
            .tensors()
            .iter()
            .map(|t| {
                let len = t.data.len() as u64 * 4;
                let e = TensorEntry {
                    name: t.name.clone(),
                    kind: t.kind,
                    shape: t.shape.clone(),
                    dtype: "f32".into(),
                    offset,
                    len,
                };
                offset += len;
                e
            })
            .collect();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            tensors,
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            out.extend_from_slice(&f32_to_le_bytes(&t.data));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("missing checkpoint magic".into()));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let blob_start = 16usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("manifest length exceeds file".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..blob_start])?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                manifest.format_version
            )));
        }
        manifest.config.validate()?;
        let blob = &bytes[blob_start..];
        let tensors = manifest
            .tensors
            .into_iter()
            .map(|e| {
                if e.dtype != "f32" {
                    return Err(Error::Checkpoint(format!("tensor '{}' has dtype {}", e.name, e.dtype)));
                }
                let (s, n) = (e.offset as usize, e.len as usize);
                let raw = s
                    .checked_add(n)
                    .and_then(|end| blob.get(s..end))
                    .ok_or_else(|| Error::Checkpoint(format!("tensor '{}' lies outside the blob", e.name)))?;
                if raw.len() % 4 != 0 {
                    return Err(Error::Checkpoint(format!("tensor '{}' has a ragged byte length", e.name)));
                }
                Ok(Tensor {
                    name: e.name,
                    kind: e.kind,
                    shape: e.shape,
                    data: f32_from_le_bytes(raw),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(tensors)?;
        params.check_layout(&manifest.config)?;
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Checkpoint(format!("tensor '{name}' holds non-finite values")));
        }
        Ok(Checkpoint {
            config: manifest.config,
            params,
            metadata: manifest.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes()?)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}
