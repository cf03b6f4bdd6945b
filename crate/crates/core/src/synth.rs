//! Synthetic tone dataset: class `k` is a tone at `300·2^k` Hz.
//!
//! Each clip gates its tone on and off in breath-like cycles over a faint
//! noise floor, so it passes the SNR screen, and is stored at one of several
//! sample rates to exercise resampling.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::audio::wav::{encode_wav, SampleEncoding};
use crate::audio::RawRecording;
use crate::error::Result;
use crate::labels::Class;
use crate::rng::{standard_normal, stream, Domain};
use crate::training::{DatasetManifest, ManifestEntry};

pub const BASE_HZ: f64 = 300.0;
const RATES: [u32; 3] = [16_000, 22_050, 44_100];

pub fn tone_hz(class: Class) -> f64 {
    BASE_HZ * 2f64.powi(class.index() as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub clips_per_class: usize,
    pub seed: u64,
    /// Relative frequency jitter, uniform in `±jitter`.
    pub jitter: f64,
    pub noise_amplitude: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            clips_per_class: 20,
            seed: 0,
            jitter: 0.01,
            noise_amplitude: 0.005,
        }
    }
}

/// One synthetic recording, determined by `(seed, class, index)`.
pub fn tone_recording(spec: &SynthSpec, class: Class, index: usize) -> Result<RawRecording> {
    let mut rng = stream(spec.seed, Domain::Synth, class.index() as u64, index as u64);
    let rate = RATES[rng.random_range(0..RATES.len())];
    let seconds: f64 = rng.random_range(3.6..4.6);
    let freq = tone_hz(class) * (1.0 + rng.random_range(-spec.jitter..=spec.jitter));
    let amp: f64 = rng.random_range(0.3..0.8);
    let period: f64 = rng.random_range(1.2..1.8);
    let duty: f64 = rng.random_range(0.3..0.4);
    let phase: f64 = rng.random_range(0.0..1.0);
    let ramp = 0.05;
    let n = (seconds * rate as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let c = (t / period + phase).fract() * period;
            let on = duty * period;
            let env = if c >= on {
                0.0
            } else {
                let edge = c.min(on - c);
                if edge < ramp {
                    0.5 - 0.5 * (std::f64::consts::PI * edge / ramp).cos()
                } else {
                    1.0
                }
            };
            let v = amp * env * (2.0 * std::f64::consts::PI * freq * t).sin()
                + spec.noise_amplitude * standard_normal(&mut rng);
            v as f32
        })
        .collect();
    RawRecording::mono(samples, rate)
}

/// Writes `clips_per_class` WAV files per class plus `manifest.csv` into `dir`.
///
/// Manifest paths are relative to `dir`. Each clip is its own patient.
pub fn write_tone_dataset(dir: &Path, spec: &SynthSpec) -> Result<(PathBuf, DatasetManifest)> {
    fs::create_dir_all(dir.join("audio"))?;
    let mut entries = Vec::new();
    for class in Class::ALL {
        for i in 0..spec.clips_per_class {
            let id = format!("{}_{i:03}", class.name().to_ascii_lowercase());
            let rel = PathBuf::from("audio").join(format!("{id}.wav"));
            let rec = tone_recording(spec, class, i)?;
            fs::write(dir.join(&rel), encode_wav(&rec, SampleEncoding::Pcm16))?;
            entries.push(ManifestEntry {
                clip_id: id.clone(),
                path: rel,
                label: class,
                patient_id: Some(id),
            });
        }
    }
    let manifest = DatasetManifest::new(entries)?;
    let path = dir.join("manifest.csv");
    manifest.write_csv(&path)?;
    Ok((path, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::qc::{quality_check, QcConfig, Verdict};
    use crate::audio::standardize;

    #[test]
    fn clips_pass_quality_screen() {
        let spec = SynthSpec::default();
        for class in Class::ALL {
            for i in 0..3 {
                let clip = standardize(&tone_recording(&spec, class, i).unwrap()).unwrap();
                let r = quality_check(&clip, &QcConfig::default());
                assert_eq!(r.verdict, Verdict::Accept, "{class} {i}: {r:?}");
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SynthSpec::default();
        let a = tone_recording(&spec, Class::Copd, 4).unwrap();
        let b = tone_recording(&spec, Class::Copd, 4).unwrap();
        assert_eq!(a.channels(), b.channels());
        let c = tone_recording(&SynthSpec { seed: 1, ..spec }, Class::Copd, 4).unwrap();
        assert_ne!(a.channels(), c.channels());
    }

    #[test]
    fn dataset_manifest_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            clips_per_class: 2,
            ..Default::default()
        };
        let (path, m) = write_tone_dataset(dir.path(), &spec).unwrap();
        let back = DatasetManifest::read_csv(&path).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back.class_counts(), m.class_counts());
        assert!(back.entries.iter().all(|e| e.path.exists()));
    }
}
