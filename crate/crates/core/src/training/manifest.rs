use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Class, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: PathBuf,
    #[serde(deserialize_with = "parse_class")]
    pub label: Class,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub patient_id: Option<String>,
}

fn parse_class<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Class, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| !s.trim().is_empty()))
}

/// CSV manifest with columns `clip_id,path,label,patient_id`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = DatasetManifest { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.clip_id.is_empty() {
                return Err(Error::InvalidInput("empty clip_id in manifest".into()));
            }
            if !seen.insert(&e.clip_id) {
                return Err(Error::InvalidInput(format!("duplicate clip_id '{}'", e.clip_id)));
            }
        }
        Ok(())
    }

    /// Relative paths are resolved against the manifest's directory.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let mut e: ManifestEntry = row?;
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["clip_id", "path", "label", "patient_id"])?;
        for e in &self.entries {
            w.write_record([
                e.clip_id.as_str(),
                &e.path.to_string_lossy(),
                e.label.name(),
                e.patient_id.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }

    pub fn has_patient_ids(&self) -> bool {
        self.entries.iter().any(|e| e.patient_id.is_some())
    }

    pub fn by_id(&self) -> BTreeMap<&str, &ManifestEntry> {
        self.entries.iter().map(|e| (e.clip_id.as_str(), e)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
