use std::fs;
use std::path::{Path, PathBuf};

use breathnet_core::model::Variant;
use breathnet_core::training::Partition;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Fixed layout of artifacts under a workdir. All recorded paths are relative to it.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn store(&self) -> PathBuf {
        self.root.join("features/store.bin")
    }

    pub fn hand_csv(&self) -> PathBuf {
        self.root.join("features/hand_features.csv")
    }

    pub fn preprocess_dir(&self) -> PathBuf {
        self.root.join("preprocess")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn run_dir(&self, v: Variant) -> PathBuf {
        self.root.join("runs").join(v.name())
    }

    pub fn checkpoint(&self, v: Variant) -> PathBuf {
        self.run_dir(v).join("checkpoint.bin")
    }

    pub fn eval_dir(&self, v: Variant, p: Partition) -> PathBuf {
        self.root.join("evaluation").join(v.name()).join(p.name())
    }

    pub fn explain_dir(&self, v: Variant) -> PathBuf {
        self.root.join("explain").join(v.name())
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Sorted names of the subdirectories of `dir` (empty when it does not exist).
pub fn subdirs(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    out.sort();
    out
}
