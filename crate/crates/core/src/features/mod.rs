//! Deep-branch mel-spectrogram and the 70-dimensional handcrafted descriptor.

pub mod handcrafted;
pub mod mel;
pub mod stft;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::audio::{StandardClip, CLIP_LEN};
use crate::error::{Error, Result};

pub use handcrafted::{handcrafted_vector, HandcraftedVector};
pub use mel::{mel_filterbank, mel_spectrogram, MelFilterbank, MelSpectrogram};
pub use stft::{stft, Spectrogram};

pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_FRAMES: usize = (CLIP_LEN - N_FFT) / HOP + 1;
pub const N_MELS: usize = 128;
pub const N_MFCC: usize = 20;
pub const N_CHROMA: usize = 12;
pub const HAND_DIM: usize = 2 * N_MFCC + 2 * 3 + 2 * N_CHROMA;

pub const MEL_FMIN: f64 = 20.0;
pub const MEL_FMAX: f64 = 8_000.0;
pub const DB_FLOOR: f64 = 1e-10;

/// Chroma bin labels; index 0 is the pitch class of A440.
pub const PITCH_CLASSES: [&str; N_CHROMA] = [
    "A", "A#", "B", "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#",
];

/// Names of the handcrafted vector entries, in layout order.
pub fn hand_feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(HAND_DIM);
        names.extend((0..N_MFCC).map(|k| format!("mfcc_mean_{k}")));
        names.extend((0..N_MFCC).map(|k| format!("mfcc_std_{k}")));
        for d in ["zcr", "centroid", "bandwidth"] {
            names.push(format!("{d}_mean"));
            names.push(format!("{d}_std"));
        }
        names.extend(PITCH_CLASSES.iter().map(|p| format!("chroma_mean_{p}")));
        names.extend(PITCH_CLASSES.iter().map(|p| format!("chroma_std_{p}")));
        names
    })
}

/// Index ranges of each descriptor block in the handcrafted vector.
pub mod layout {
    use std::ops::Range;

    use super::{N_CHROMA, N_MFCC};

    pub const MFCC_MEAN: Range<usize> = 0..N_MFCC;
    pub const MFCC_STD: Range<usize> = N_MFCC..2 * N_MFCC;
    pub const ZCR_MEAN: usize = 2 * N_MFCC;
    pub const ZCR_STD: usize = ZCR_MEAN + 1;
    pub const CENTROID_MEAN: usize = ZCR_MEAN + 2;
    pub const CENTROID_STD: usize = ZCR_MEAN + 3;
    pub const BANDWIDTH_MEAN: usize = ZCR_MEAN + 4;
    pub const BANDWIDTH_STD: usize = ZCR_MEAN + 5;
    pub const CHROMA_MEAN: Range<usize> = ZCR_MEAN + 6..ZCR_MEAN + 6 + N_CHROMA;
    pub const CHROMA_STD: Range<usize> = ZCR_MEAN + 6 + N_CHROMA..ZCR_MEAN + 6 + 2 * N_CHROMA;
}

/// Both feature views of one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePair {
    pub mel: Vec<f32>,
    pub hand: Vec<f32>,
}

impl FeaturePair {
    pub fn extract(clip: &StandardClip) -> Result<FeaturePair> {
        let mel = mel_spectrogram(clip)?;
        let hand = handcrafted_vector(clip)?;
        Ok(FeaturePair {
            mel: mel.values,
            hand: hand.values,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mel.len() != N_MELS * N_FRAMES {
            return Err(Error::shape(N_MELS * N_FRAMES, self.mel.len()));
        }
        if self.hand.len() != HAND_DIM {
            return Err(Error::shape(HAND_DIM, self.hand.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_matches_no_center_layout() {
        assert_eq!(N_FRAMES, 247);
        assert_eq!(N_BINS, 513);
        assert_eq!(HAND_DIM, 70);
    }

    #[test]
    fn names_match_layout() {
        let names = hand_feature_names();
        assert_eq!(names.len(), HAND_DIM);
        assert_eq!(names[layout::MFCC_MEAN.start], "mfcc_mean_0");
        assert_eq!(names[layout::MFCC_STD.start], "mfcc_std_0");
        assert_eq!(names[layout::ZCR_MEAN], "zcr_mean");
        assert_eq!(names[layout::CENTROID_MEAN], "centroid_mean");
        assert_eq!(names[layout::BANDWIDTH_STD], "bandwidth_std");
        assert_eq!(names[layout::CHROMA_MEAN.start], "chroma_mean_A");
        assert_eq!(names[layout::CHROMA_STD.end - 1], "chroma_std_G#");
    }
}
