#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use breathnet_cli::RunConfig;
use breathnet_core::synth::{write_tone_dataset, SynthSpec};
use sha2::{Digest, Sha256};

pub const SMALL_MODEL: &str = r#"conv_blocks = [{filters = 4, kernel = 3, pool = 2}, {filters = 8, kernel = 3, pool = 2}, {filters = 8, kernel = 3, pool = 2}]
lstm_units_per_direction = 16
attention_dim = 16
hand_hidden = [32]
fusion_hidden = 32
"#;

/// The network that fits the 100-clip tone set within 30 epochs.
pub const TONE_MODEL: &str = r#"conv_blocks = [{filters = 8, kernel = 3, pool = 2}, {filters = 16, kernel = 3, pool = 2}, {filters = 16, kernel = 3, pool = 2}]
lstm_units_per_direction = 32
attention_dim = 32
hand_hidden = [64, 64]
fusion_hidden = 64
"#;

/// Small network and cheap attribution settings; augmentation off unless asked for.
pub fn small_config(manifest: &Path, workdir: &Path, epochs: usize, augment: bool) -> String {
    config_text(manifest, workdir, SMALL_MODEL, &format!("max_epochs = {epochs}\nlr0 = 0.003\n"), augment)
}

pub fn config_text(manifest: &Path, workdir: &Path, model: &str, training: &str, augment: bool) -> String {
    let mut s = format!(
        r#"seed = 0
[paths]
manifest = "{}"
workdir = "{}"
[model]
{model}[training]
{training}[xai]
ig_steps = 16
shap_permutations = 100
background_size = 10
global_samples = 10
"#,
        manifest.display(),
        workdir.display()
    );
    if !augment {
        s.push_str("[augmentation]\np_stretch = 0.0\np_pitch = 0.0\np_noise = 0.0\n");
    }
    s
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
}

impl Fixture {
    pub fn new(clips_per_class: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            clips_per_class,
            ..SynthSpec::default()
        };
        let (manifest, _) = write_tone_dataset(&dir.path().join("data"), &spec).unwrap();
        Fixture { dir, manifest }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Writes `<name>.toml` next to the data and returns the parsed configuration.
    pub fn config(&self, name: &str, epochs: usize, augment: bool) -> (PathBuf, RunConfig) {
        let work = self.path().join(name);
        let text = small_config(&self.manifest, &work, epochs, augment);
        let path = self.path().join(format!("{name}.toml"));
        fs::write(&path, &text).unwrap();
        (path.clone(), RunConfig::load(&path).unwrap())
    }
}

pub fn sha256(path: &Path) -> String {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Relative path → digest for every file with one of `exts` under `root`.
pub fn digests(root: &Path, exts: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().and_then(|x| x.to_str()).is_some_and(|x| exts.contains(&x)) {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), sha256(&p)));
            }
        }
    }
    out.sort();
    out
}
