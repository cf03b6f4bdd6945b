//! Preprocessed feature store.
//!
//! `store.bin` layout: magic `AUSFEAT1`, u64 LE header length, JSON header,
//! then per entry (in header order) the z-scored clip, the mel spectrogram
//! (band-major) and the handcrafted vector, all f32 LE.

use std::fs;
use std::path::Path;

use breathnet_core::audio::{ClipStage, StandardClip, CLIP_LEN};
use breathnet_core::features::{FeaturePair, HAND_DIM, N_MELS, N_FRAMES};
use breathnet_core::training::Example;
use breathnet_core::util::{f32_from_le_bytes, f32_to_le_bytes};
use breathnet_core::Class;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"AUSFEAT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub clip_id: String,
    pub label: Class,
    #[serde(default)]
    pub patient_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    clip_len: usize,
    mel_shape: [usize; 2],
    hand_dim: usize,
    entries: Vec<StoreEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredClip {
    pub entry: StoreEntry,
    pub clip: Vec<f32>,
    pub features: FeaturePair,
}

impl StoredClip {
    pub fn to_example(&self) -> Result<Example> {
        Ok(Example {
            clip_id: self.entry.clip_id.clone(),
            label: self.entry.label,
            clip: Some(StandardClip::new(self.clip.clone(), ClipStage::Zscored)?),
            features: self.features.clone(),
        })
    }
}

const RECORD: usize = CLIP_LEN + N_MELS * N_FRAMES + HAND_DIM;

pub fn write_store(path: &Path, clips: &[StoredClip]) -> Result<()> {
    let header = Header {
        format_version: FORMAT_VERSION,
        clip_len: CLIP_LEN,
        mel_shape: [N_MELS, N_FRAMES],
        hand_dim: HAND_DIM,
        entries: clips.iter().map(|c| c.entry.clone()).collect(),
    };
    let h = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + h.len() + clips.len() * RECORD * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(h.len() as u64).to_le_bytes());
    out.extend_from_slice(&h);
    for c in clips {
        if c.clip.len() != CLIP_LEN || c.features.mel.len() != N_MELS * N_FRAMES || c.features.hand.len() != HAND_DIM {
            return Err(CliError::data(format!("clip '{}' has malformed features", c.entry.clip_id)));
        }
        out.extend(f32_to_le_bytes(&c.clip));
        out.extend(f32_to_le_bytes(&c.features.mel));
        out.extend(f32_to_le_bytes(&c.features.hand));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<Vec<StoredClip>> {
    let bytes = fs::read(path).map_err(|e| {
        CliError::data(format!(
            "cannot read feature store {}: {e}; run `breathnet preprocess` first",
            path.display()
        ))
    })?;
    let bad = |why: &str| CliError::data(format!("feature store {}: {why}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    if header.format_version != FORMAT_VERSION
        || header.clip_len != CLIP_LEN
        || header.mel_shape != [N_MELS, N_FRAMES]
        || header.hand_dim != HAND_DIM
    {
        return Err(bad("incompatible format or feature geometry"));
    }
    if bytes.len() - body != header.entries.len() * RECORD * 4 {
        return Err(bad("payload length does not match header"));
    }
    let data = f32_from_le_bytes(&bytes[body..]);
    Ok(header
        .entries
        .into_iter()
        .zip(data.chunks_exact(RECORD))
        .map(|(entry, rec)| {
            let (clip, rest) = rec.split_at(CLIP_LEN);
            let (mel, hand) = rest.split_at(N_MELS * N_FRAMES);
            StoredClip {
                entry,
                clip: clip.to_vec(),
                features: FeaturePair {
                    mel: mel.to_vec(),
                    hand: hand.to_vec(),
                },
            }
        })
        .collect())
}

/// Handcrafted vectors as CSV with named columns.
pub fn write_hand_csv(path: &Path, clips: &[StoredClip]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
    let names = breathnet_core::features::hand_feature_names();
    let mut head = vec!["clip_id".to_string(), "label".to_string()];
    head.extend(names.iter().cloned());
    w.write_record(&head).map_err(|e| CliError::data(e.to_string()))?;
    for c in clips {
        let mut row = vec![c.entry.clip_id.clone(), c.entry.label.name().to_string()];
        row.extend(c.features.hand.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
