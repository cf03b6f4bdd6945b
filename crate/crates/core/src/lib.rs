//! Respiratory sound classification toolkit.
//!
//! The pipeline runs from raw WAV recordings to explained predictions:
//!
//! * [`audio`] decodes, resamples and standardizes recordings into 4 s clips
//!   and screens them for clipping and low SNR.
//! * [`augment`] perturbs training clips (time stretch, pitch shift, noise).
//! * [`features`] computes the 128-band log-mel spectrogram and the
//!   70-dimensional handcrafted descriptor.
//! * [`model`] holds the hybrid CNN–BiLSTM–attention network, its ablation
//!   variants and exact reverse-mode gradients.
//! * [`training`] implements splitting, the smoothed loss, Adam with plateau
//!   scheduling, clipping, early stopping and checkpoint selection.
//! * [`evaluation`] computes confusion matrices, per-class metrics and ROC–AUC.
//! * [`xai`] provides Grad-CAM, Integrated Gradients and Shapley values.

pub mod audio;
pub mod augment;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labels;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod training;
pub mod util;
pub mod xai;

pub use error::{Error, Result};
pub use labels::{Class, N_CLASSES};
