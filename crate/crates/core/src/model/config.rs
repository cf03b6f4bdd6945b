use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{HAND_DIM, N_FRAMES, N_MELS};
use crate::labels::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FullHybrid,
    DeepOnly,
    HandcraftedOnly,
    CnnOnly,
    NoAttention,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::FullHybrid,
        Variant::DeepOnly,
        Variant::HandcraftedOnly,
        Variant::CnnOnly,
        Variant::NoAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FullHybrid => "full_hybrid",
            Variant::DeepOnly => "deep_only",
            Variant::HandcraftedOnly => "handcrafted_only",
            Variant::CnnOnly => "cnn_only",
            Variant::NoAttention => "no_attention",
        }
    }

    pub fn uses_mel(self) -> bool {
        self != Variant::HandcraftedOnly
    }

    pub fn uses_hand(self) -> bool {
        self != Variant::DeepOnly
    }

    pub fn uses_lstm(self) -> bool {
        matches!(self, Variant::FullHybrid | Variant::DeepOnly | Variant::NoAttention)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::FullHybrid | Variant::DeepOnly)
    }

    /// HandcraftedOnly feeds the hand embedding straight into the classifier.
    pub fn uses_fusion(self) -> bool {
        self != Variant::HandcraftedOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvBlockSpec {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_mels: usize,
    pub input_frames: usize,
    pub hand_dim: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub conv_dropout: f64,
    pub lstm_units_per_direction: usize,
    pub attention_dim: usize,
    pub hand_hidden: Vec<usize>,
    pub hand_dropout: f64,
    pub fusion_hidden: usize,
    pub fusion_dropout: f64,
    pub n_classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let block = |filters| ConvBlockSpec {
            filters,
            kernel: 3,
            pool: 2,
        };
        ModelConfig {
            variant: Variant::FullHybrid,
            input_mels: N_MELS,
            input_frames: N_FRAMES,
            hand_dim: HAND_DIM,
            conv_blocks: vec![block(32), block(64), block(128)],
            conv_dropout: 0.2,
            lstm_units_per_direction: 128,
            attention_dim: 128,
            hand_hidden: vec![128, 128],
            hand_dropout: 0.3,
            fusion_hidden: 256,
            fusion_dropout: 0.3,
            n_classes: N_CLASSES,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Spatial extent `(mels, frames)` after each conv block, starting with the input.
    pub fn conv_extents(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_mels, self.input_frames)];
        for b in &self.conv_blocks {
            let (h, w) = *dims.last().unwrap();
            dims.push((h / b.pool, w / b.pool));
        }
        dims
    }

    pub fn conv_channels(&self) -> usize {
        self.conv_blocks.last().map_or(1, |b| b.filters)
    }

    /// `(M′, T′)` of the final feature maps.
    pub fn feature_map_dims(&self) -> (usize, usize) {
        *self.conv_extents().last().unwrap()
    }

    pub fn lstm_input_dim(&self) -> usize {
        self.feature_map_dims().0 * self.conv_channels()
    }

    pub fn deep_width(&self) -> usize {
        match self.variant {
            Variant::HandcraftedOnly => 0,
            Variant::CnnOnly => self.conv_channels(),
            _ => 2 * self.lstm_units_per_direction,
        }
    }

    pub fn hand_width(&self) -> usize {
        if self.variant.uses_hand() {
            self.hand_hidden.last().copied().unwrap_or(self.hand_dim)
        } else {
            0
        }
    }

    /// Width of the fused representation `z`.
    pub fn fused_width(&self) -> usize {
        self.deep_width() + self.hand_width()
    }

    pub fn mel_len(&self) -> usize {
        self.input_mels * self.input_frames
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("model config: {m}")));
        if self.n_classes < 2 {
            return bad("need at least two classes");
        }
        if self.variant.uses_mel() {
            if self.conv_blocks.is_empty() {
                return bad("at least one conv block is required");
            }
            for b in &self.conv_blocks {
                if b.filters == 0 || b.kernel == 0 || b.kernel % 2 == 0 || b.pool == 0 {
                    return bad("conv blocks need filters > 0, odd kernel, pool > 0");
                }
            }
            let (m, t) = self.feature_map_dims();
            if m == 0 || t == 0 {
                return bad("pooling collapses the spectrogram to nothing");
            }
            if self.variant.uses_lstm() && self.lstm_units_per_direction == 0 {
                return bad("lstm_units_per_direction must be positive");
            }
            if self.variant.uses_attention() && self.attention_dim == 0 {
                return bad("attention_dim must be positive");
            }
        }
        if self.variant.uses_hand() && (self.hand_dim == 0 || self.hand_hidden.contains(&0)) {
            return bad("hand dimensions must be positive");
        }
        if self.variant.uses_fusion() && self.fusion_hidden == 0 {
            return bad("fusion_hidden must be positive");
        }
        for (name, p) in [
            ("conv_dropout", self.conv_dropout),
            ("hand_dropout", self.hand_dropout),
            ("fusion_dropout", self.fusion_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::OutOfRange {
                    name,
                    value: p,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return bad("bn_momentum must be in [0, 1) and bn_eps > 0");
        }
        Ok(())
    }
}
