//! The five diagnostic classes.
//!
//! Class indices follow the alphabetical dataset order and are used for
//! every probability vector, confusion-matrix row and checkpoint.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const N_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Asthma,
    Bronchial,
    #[serde(rename = "COPD")]
    Copd,
    Healthy,
    Pneumonia,
}

impl Class {
    pub const ALL: [Class; N_CLASSES] = [
        Class::Asthma,
        Class::Bronchial,
        Class::Copd,
        Class::Healthy,
        Class::Pneumonia,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Asthma => "Asthma",
            Class::Bronchial => "Bronchial",
            Class::Copd => "COPD",
            Class::Healthy => "Healthy",
            Class::Pneumonia => "Pneumonia",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Class::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::InvalidInput(format!("unknown class label `{t}`")))
    }
}
