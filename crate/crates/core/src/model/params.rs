use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::Real;
use crate::rng::{standard_normal, stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
    RunningStat,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        self != ParamKind::RunningStat
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    HeNormal { fan_in: usize },
    XavierUniform { fan_in: usize, fan_out: usize },
    Const(f64),
    /// LSTM bias: zeros with the forget-gate block set to one.
    ForgetOne { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn spec(name: String, kind: ParamKind, shape: Vec<usize>, init: Init) -> TensorSpec {
    TensorSpec {
        name,
        kind,
        shape,
        init,
    }
}

fn push_bn(out: &mut Vec<TensorSpec>, prefix: &str, c: usize) {
    out.push(spec(format!("{prefix}.gamma"), ParamKind::BnScale, vec![c], Init::Const(1.0)));
    out.push(spec(format!("{prefix}.beta"), ParamKind::BnShift, vec![c], Init::Const(0.0)));
    out.push(spec(
        format!("{prefix}.running_mean"),
        ParamKind::RunningStat,
        vec![c],
        Init::Const(0.0),
    ));
    out.push(spec(
        format!("{prefix}.running_var"),
        ParamKind::RunningStat,
        vec![c],
        Init::Const(1.0),
    ));
}

fn push_dense(out: &mut Vec<TensorSpec>, prefix: &str, n_in: usize, n_out: usize, he: bool) {
    let init = if he {
        Init::HeNormal { fan_in: n_in }
    } else {
        Init::XavierUniform {
            fan_in: n_in,
            fan_out: n_out,
        }
    };
    out.push(spec(format!("{prefix}.w"), ParamKind::Weight, vec![n_out, n_in], init));
    out.push(spec(format!("{prefix}.b"), ParamKind::Bias, vec![n_out], Init::Const(0.0)));
}

/// Ordered tensor layout for a configuration. Checkpoints store tensors in this order.
pub fn layout(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let v = cfg.variant;
    let mut out = Vec::new();
    if v.uses_mel() {
        let mut c_in = 1;
        for (i, b) in cfg.conv_blocks.iter().enumerate() {
            let p = format!("conv{}", i + 1);
            let fan_in = c_in * b.kernel * b.kernel;
            out.push(spec(
                format!("{p}.kernel"),
                ParamKind::Weight,
                vec![b.filters, c_in, b.kernel, b.kernel],
                Init::HeNormal { fan_in },
            ));
            out.push(spec(format!("{p}.bias"), ParamKind::Bias, vec![b.filters], Init::Const(0.0)));
            push_bn(&mut out, &format!("{p}.bn"), b.filters);
            c_in = b.filters;
        }
    }
    if v.uses_lstm() {
        let d = cfg.lstm_input_dim();
        let h = cfg.lstm_units_per_direction;
        for dir in ["fwd", "bwd"] {
            out.push(spec(
                format!("lstm.{dir}.w_ih"),
                ParamKind::Weight,
                vec![4 * h, d],
                Init::XavierUniform {
                    fan_in: d,
                    fan_out: 4 * h,
                },
            ));
            out.push(spec(
                format!("lstm.{dir}.w_hh"),
                ParamKind::Weight,
                vec![4 * h, h],
                Init::XavierUniform {
                    fan_in: h,
                    fan_out: 4 * h,
                },
            ));
            out.push(spec(
                format!("lstm.{dir}.bias"),
                ParamKind::Bias,
                vec![4 * h],
                Init::ForgetOne { hidden: h },
            ));
        }
    }
    if v.uses_attention() {
        let w = 2 * cfg.lstm_units_per_direction;
        let a = cfg.attention_dim;
        out.push(spec(
            "attention.w".into(),
            ParamKind::Weight,
            vec![a, w],
            Init::XavierUniform { fan_in: w, fan_out: a },
        ));
        out.push(spec("attention.b".into(), ParamKind::Bias, vec![a], Init::Const(0.0)));
        out.push(spec(
            "attention.v".into(),
            ParamKind::Weight,
            vec![a],
            Init::XavierUniform { fan_in: a, fan_out: 1 },
        ));
    }
    if v.uses_hand() {
        let mut n_in = cfg.hand_dim;
        for (i, &n_out) in cfg.hand_hidden.iter().enumerate() {
            push_dense(&mut out, &format!("hand.dense{}", i + 1), n_in, n_out, true);
            push_bn(&mut out, &format!("hand.bn{}", i + 1), n_out);
            n_in = n_out;
        }
    }
    if v.uses_fusion() {
        push_dense(&mut out, "fusion", cfg.fused_width(), cfg.fusion_hidden, true);
        push_dense(&mut out, "classifier", cfg.fusion_hidden, cfg.n_classes, false);
    } else {
        push_dense(&mut out, "classifier", cfg.fused_width(), cfg.n_classes, false);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

/// Named parameter tensors in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    tensors: Vec<Tensor<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> ModelParams<F> {
    pub fn from_tensors(tensors: Vec<Tensor<F>>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tensors.len());
        for (i, t) in tensors.iter().enumerate() {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::shape(
                    format!("{} elements for {} {:?}", t.shape.iter().product::<usize>(), t.name, t.shape),
                    t.data.len(),
                ));
            }
            if index.insert(t.name.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate tensor '{}'", t.name)));
            }
        }
        Ok(ModelParams { tensors, index })
    }

    /// Seeded initialization; each tensor draws from its own substream.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let tensors = layout(cfg)
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = stream(seed, Domain::Init, i as u64, 0);
                let n = s.len();
                let data: Vec<F> = match s.init {
                    Init::Const(c) => vec![F::from_f64_lossy(c); n],
                    Init::HeNormal { fan_in } => {
                        let sd = (2.0 / fan_in as f64).sqrt();
                        (0..n)
                            .map(|_| F::from_f64_lossy(sd * standard_normal(&mut rng)))
                            .collect()
                    }
                    Init::XavierUniform { fan_in, fan_out } => {
                        let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..n)
                            .map(|_| F::from_f64_lossy(rng.random_range(-lim..lim)))
                            .collect()
                    }
                    Init::ForgetOne { hidden } => (0..n)
                        .map(|j| if (hidden..2 * hidden).contains(&j) { F::one() } else { F::zero() })
                        .collect(),
                };
                Tensor {
                    name: s.name,
                    kind: s.kind,
                    shape: s.shape,
                    data,
                }
            })
            .collect();
        Self::from_tensors(tensors)
    }

    /// Check names, kinds and shapes against the layout a config requires.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = layout(cfg);
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for variant {}, found {}",
                expected.len(),
                cfg.variant,
                self.tensors.len()
            )));
        }
        for (e, t) in expected.iter().zip(&self.tensors) {
            if e.name != t.name || e.kind != t.kind || e.shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor '{}' {:?} does not match expected '{}' {:?}",
                    t.name, t.shape, e.name, e.shape
                )));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<F>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    /// Data of a tensor known to exist in the layout.
    pub fn get(&self, name: &str) -> &[F] {
        match self.index.get(name) {
            Some(&i) => &self.tensors[i].data,
            None => panic!("parameter tensor '{name}' missing from layout"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [F] {
        match self.index.get(name) {
            Some(&i) => &mut self.tensors[i].data,
            None => panic!("parameter tensor '{name}' missing from layout"),
        }
    }

    pub fn total_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.kind.trainable())
            .map(|t| t.data.len())
            .sum()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    kind: t.kind,
                    shape: t.shape.clone(),
                    data: vec![F::zero(); t.data.len()],
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    kind: t.kind,
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| G::from_f64_lossy(v.to_f64_lossy())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// First tensor containing a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }
}
