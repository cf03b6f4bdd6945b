//! Attribution methods: Grad-CAM on the last conv block, Integrated Gradients on
//! the mel input, and Shapley values over the handcrafted vector.
//!
//! Targets are pre-softmax logits. Model evaluation here runs in `f64`.

pub mod gradcam;
pub mod ig;
pub mod shap;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Class;
use crate::util::{f32_from_le_bytes, f32_to_le_bytes};

pub use gradcam::{bilinear_resize, cam_from_maps, grad_cam};
pub use ig::{integrated_gradients, integrated_gradients_with, multi_baseline_ig, silent_baseline};
pub use shap::{
    background_mean, global_importance, kendall_tau, shap_exact, shap_hand_features, shap_sampled, FeatureImportance,
    ShapEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradCam,
    IntegratedGradients,
    Shap,
    /// Pixel-level spectrogram attribution approximated by multi-baseline IG.
    SpectrogramShapApprox,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GradCam => "grad_cam",
            Method::IntegratedGradients => "integrated_gradients",
            Method::Shap => "shap",
            Method::SpectrogramShapApprox => "spectrogram_shap_approx",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n = s.trim().to_ascii_lowercase().replace('-', "_");
        [
            Method::GradCam,
            Method::IntegratedGradients,
            Method::Shap,
            Method::SpectrogramShapApprox,
        ]
        .into_iter()
        .find(|m| m.name() == n || (n == "ig" && *m == Method::IntegratedGradients))
        .ok_or_else(|| Error::InvalidInput(format!("unknown attribution method '{s}'")))
    }
}

/// Attribution values plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub method: Method,
    pub target_class: Class,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    /// `[rows, cols]` for spectrogram maps (mel bands × frames), `[n]` for feature vectors.
    pub shape: Vec<usize>,
    pub baseline: String,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Stored in the companion `.f32` payload, not in the JSON.
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl AttributionMap {
    pub fn validate(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.values.len() {
            return Err(Error::shape(n, self.values.len()));
        }
        if self.method == Method::GradCam && self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("Grad-CAM map has negative values".into()));
        }
        Ok(())
    }

    /// Writes `<stem>.json` (metadata) and `<stem>.f32` (little-endian values).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.validate()?;
        let vals: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        fs::write(dir.join(format!("{stem}.f32")), f32_to_le_bytes(&vals))?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let mut m: AttributionMap = serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
        let raw = fs::read(dir.join(format!("{stem}.f32")))?;
        if raw.len() % 4 != 0 {
            return Err(Error::InvalidInput(format!("{stem}.f32 has a ragged length")));
        }
        m.values = f32_from_le_bytes(&raw).into_iter().map(f64::from).collect();
        m.validate()?;
        Ok(m)
    }
}

/// Share of a spectrogram map's total attribution falling in each frequency band.
///
/// `centers_hz` gives each map row's centre frequency; `edges_hz` are band boundaries.
pub fn band_shares(values: &[f64], rows: usize, centers_hz: &[f64], edges_hz: &[f64]) -> Vec<(String, f64)> {
    let cols = values.len() / rows.max(1);
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    edges_hz
        .windows(2)
        .map(|w| {
            let s: f64 = (0..rows)
                .filter(|&r| centers_hz[r] >= w[0] && centers_hz[r] < w[1])
                .flat_map(|r| values[r * cols..(r + 1) * cols].iter())
                .map(|v| v.abs())
                .sum();
            (
                format!("{:.0}-{:.0} Hz", w[0], w[1]),
                if total > 0.0 { s / total } else { 0.0 },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = AttributionMap {
            method: Method::IntegratedGradients,
            target_class: Class::Pneumonia,
            clip_id: Some("c1".into()),
            shape: vec![2, 3],
            baseline: "silence".into(),
            diagnostics: BTreeMap::from([("completeness_gap".to_string(), 1e-3)]),
            feature_names: None,
            standard_errors: None,
            note: None,
            values: vec![0.5, -1.0, 0.25, 0.0, 2.0, 3.0],
        };
        m.save(dir.path(), "ig").unwrap();
        let back = AttributionMap::load(dir.path(), "ig").unwrap();
        assert_eq!(back, m);
        m.values.pop();
        assert!(m.save(dir.path(), "bad").is_err());
    }

    #[test]
    fn band_shares_sum_to_one_over_full_range() {
        let centers = [100.0, 500.0, 1500.0, 4000.0];
        let vals = [1.0, 1.0, 2.0, 2.0, 0.0, 0.0, 4.0, 0.0];
        let s = band_shares(&vals, 4, &centers, &[0.0, 400.0, 2000.0, 8000.0]);
        assert_eq!(s[0].1, 0.2);
        assert_eq!(s[1].1, 0.4);
        assert_eq!(s[2].1, 0.4);
    }
}
