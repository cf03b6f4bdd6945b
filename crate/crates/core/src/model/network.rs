//! Hybrid network forward pass with retained activations and exact backward pass.
//!
//! Batch layouts: mel `[B, M, T]` (band-major per sample), hand `[B, D_h]`,
//! conv activations `[B, C, H, W]`, sequences `[B, T′, D]`.

use rand::Rng;

use super::config::{ModelConfig, Variant};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::nn::layers::{self as L, AttentionCache, ConvGeom, LstmCache, NormCache, NormSpec};
use crate::nn::{Mode, Real};

#[derive(Debug, Clone)]
struct ConvBlockTrace<F> {
    geom: ConvGeom,
    input: Vec<F>,
    bn: NormCache<F>,
    relu_out: Vec<F>,
    argmax: Vec<u32>,
    mask: Option<Vec<F>>,
}

#[derive(Debug, Clone)]
struct LstmTrace<F> {
    input: Vec<F>,
    fwd: LstmCache<F>,
    bwd: LstmCache<F>,
}

#[derive(Debug, Clone)]
struct HandLayerTrace<F> {
    input: Vec<F>,
    bn: NormCache<F>,
    relu_out: Vec<F>,
}

/// Updated batch-norm running statistics produced by a train-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate<F> {
    pub prefix: String,
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

/// Activations retained by [`forward`] for backpropagation and attribution.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    pub variant: Variant,
    pub mode: Mode,
    pub batch: usize,
    conv: Vec<ConvBlockTrace<F>>,
    /// Final conv feature maps `[B, C, M′, T′]` (after the last block's dropout).
    pub feature_maps: Vec<F>,
    lstm: Option<LstmTrace<F>>,
    /// BiLSTM outputs `[B, T′, 2H]`, forward half first.
    pub lstm_out: Vec<F>,
    attention: Option<AttentionCache<F>>,
    /// Attention weights `[B, T′]` (empty when the variant has no attention).
    pub attention_weights: Vec<F>,
    /// Deep embedding `[B, deep_width]`.
    pub deep: Vec<F>,
    hand_layers: Vec<HandLayerTrace<F>>,
    hand_mask: Option<Vec<F>>,
    /// Hand embedding `[B, hand_width]`.
    pub hand_embedding: Vec<F>,
    /// Fused representation `[B, fused_width]`.
    pub fused: Vec<F>,
    fusion_relu: Vec<F>,
    fusion_mask: Option<Vec<F>>,
    head_in: Vec<F>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    pub bn_updates: Vec<BnUpdate<F>>,
}

/// Gradients of a scalar objective with respect to parameters and inputs.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    pub params: ModelParams<F>,
    /// `[B, M, T]`; empty when the variant ignores the spectrogram.
    pub mel: Vec<F>,
    /// `[B, D_h]`; empty when the variant ignores handcrafted features.
    pub hand: Vec<F>,
    /// Gradient with respect to [`ForwardTrace::feature_maps`].
    pub feature_maps: Vec<F>,
}

fn norm_spec<F: Real>(cfg: &ModelConfig) -> NormSpec<F> {
    NormSpec {
        eps: F::from_f64_lossy(cfg.bn_eps),
        momentum: F::from_f64_lossy(cfg.bn_momentum),
    }
}

#[allow(clippy::too_many_arguments)]
fn batchnorm<F: Real>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    prefix: &str,
    mode: Mode,
    batch: usize,
    channels: usize,
    spatial: usize,
    x: &[F],
    updates: &mut Vec<BnUpdate<F>>,
) -> (Vec<F>, NormCache<F>) {
    let mut mean = params.get(&format!("{prefix}.running_mean")).to_vec();
    let mut var = params.get(&format!("{prefix}.running_var")).to_vec();
    let out = L::batchnorm_forward(
        norm_spec(cfg),
        mode,
        batch,
        channels,
        spatial,
        x,
        params.get(&format!("{prefix}.gamma")),
        params.get(&format!("{prefix}.beta")),
        &mut mean,
        &mut var,
    );
    if mode == Mode::Train {
        updates.push(BnUpdate {
            prefix: prefix.to_string(),
            mean,
            var,
        });
    }
    out
}

/// `[B, C, M, T]` → `[B, T, M·C]` with index `m·C + c` inside each frame.
pub fn flatten_frames<F: Real>(fm: &[F], batch: usize, c: usize, m: usize, t: usize) -> Vec<F> {
    let mut out = vec![F::zero(); fm.len()];
    for b in 0..batch {
        for ci in 0..c {
            for mi in 0..m {
                for ti in 0..t {
                    out[(b * t + ti) * m * c + mi * c + ci] = fm[((b * c + ci) * m + mi) * t + ti];
                }
            }
        }
    }
    out
}

fn unflatten_frames<F: Real>(seq: &[F], batch: usize, c: usize, m: usize, t: usize) -> Vec<F> {
    let mut out = vec![F::zero(); seq.len()];
    for b in 0..batch {
        for ci in 0..c {
            for mi in 0..m {
                for ti in 0..t {
                    out[((b * c + ci) * m + mi) * t + ti] = seq[(b * t + ti) * m * c + mi * c + ci];
                }
            }
        }
    }
    out
}

fn split_halves<F: Real>(x: &[F], rows: usize, left: usize, right: usize) -> (Vec<F>, Vec<F>) {
    let mut a = Vec::with_capacity(rows * left);
    let mut b = Vec::with_capacity(rows * right);
    for r in x.chunks_exact(left + right) {
        a.extend_from_slice(&r[..left]);
        b.extend_from_slice(&r[left..]);
    }
    (a, b)
}

fn concat_rows<F: Real>(a: &[F], left: usize, b: &[F], right: usize) -> Vec<F> {
    if left == 0 {
        return b.to_vec();
    }
    if right == 0 {
        return a.to_vec();
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.chunks_exact(left).zip(b.chunks_exact(right)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    out
}

/// Bidirectional LSTM over `[B, T, D]`; returns `[B, T, 2H]` with the forward half first.
pub fn bilstm<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: &[F],
    batch: usize,
    t_len: usize,
) -> Vec<F> {
    bilstm_traced(params, cfg, x, batch, t_len).0
}

fn bilstm_traced<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: &[F],
    batch: usize,
    t_len: usize,
) -> (Vec<F>, LstmCache<F>, LstmCache<F>) {
    let d = cfg.lstm_input_dim();
    let h = cfg.lstm_units_per_direction;
    let run = |dir: &str, reverse: bool| {
        L::lstm_forward(
            batch,
            t_len,
            d,
            h,
            x,
            params.get(&format!("lstm.{dir}.w_ih")),
            params.get(&format!("lstm.{dir}.w_hh")),
            params.get(&format!("lstm.{dir}.bias")),
            reverse,
        )
    };
    let (hf, cf) = run("fwd", false);
    let (hb, cb) = run("bwd", true);
    (concat_rows(&hf, h, &hb, h), cf, cb)
}

/// Run the network on a batch. `rng` supplies dropout masks in train mode,
/// drawn in a fixed order: conv blocks, hand encoder, fusion layer.
pub fn forward<F: Real, R: Rng + ?Sized>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    mel: &[F],
    hand: &[F],
    batch: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardTrace<F>> {
    let v = cfg.variant;
    if batch == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if v.uses_mel() && mel.len() != batch * cfg.mel_len() {
        return Err(Error::shape(
            format!("{batch}×{}×{} mel values", cfg.input_mels, cfg.input_frames),
            mel.len(),
        ));
    }
    if v.uses_hand() && hand.len() != batch * cfg.hand_dim {
        return Err(Error::shape(format!("{batch}×{} hand values", cfg.hand_dim), hand.len()));
    }
    let used_inputs = [(v.uses_mel(), mel), (v.uses_hand(), hand)];
    if used_inputs.iter().any(|(u, x)| *u && x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("network input".into()));
    }

    let mut bn_updates = Vec::new();
    let mut conv = Vec::new();
    let mut feature_maps = Vec::new();
    let mut lstm = None;
    let mut lstm_out = Vec::new();
    let mut attention = None;
    let mut attention_weights = Vec::new();
    let mut deep = Vec::new();

    if v.uses_mel() {
        let extents = cfg.conv_extents();
        let mut x = mel.to_vec();
        let mut c_in = 1;
        for (i, blk) in cfg.conv_blocks.iter().enumerate() {
            let (h, w) = extents[i];
            let geom = ConvGeom {
                c_in,
                c_out: blk.filters,
                h,
                w,
                k: blk.kernel,
            };
            let p = format!("conv{}", i + 1);
            let pre = L::conv2d_forward(
                &geom,
                batch,
                &x,
                params.get(&format!("{p}.kernel")),
                params.get(&format!("{p}.bias")),
            );
            let (mut act, bn) = batchnorm(
                cfg,
                params,
                &format!("{p}.bn"),
                mode,
                batch,
                blk.filters,
                h * w,
                &pre,
                &mut bn_updates,
            );
            L::relu_inplace(&mut act);
            let (mut pooled, argmax) = L::maxpool_forward(batch * blk.filters, h, w, blk.pool, &act);
            let mask = L::dropout_mask(mode, cfg.conv_dropout, pooled.len(), rng);
            L::apply_mask(&mut pooled, &mask);
            conv.push(ConvBlockTrace {
                geom,
                input: std::mem::replace(&mut x, pooled),
                bn,
                relu_out: act,
                argmax,
                mask,
            });
            c_in = blk.filters;
        }
        feature_maps = x;
        let c = cfg.conv_channels();
        let (m, t) = cfg.feature_map_dims();
        if v.uses_lstm() {
            let seq = flatten_frames(&feature_maps, batch, c, m, t);
            let (out, cf, cb) = bilstm_traced(params, cfg, &seq, batch, t);
            lstm = Some(LstmTrace {
                input: seq,
                fwd: cf,
                bwd: cb,
            });
            lstm_out = out;
            let width = 2 * cfg.lstm_units_per_direction;
            if v.uses_attention() {
                let (ctx, cache) = L::attention_forward(
                    batch,
                    t,
                    width,
                    cfg.attention_dim,
                    &lstm_out,
                    params.get("attention.w"),
                    params.get("attention.b"),
                    params.get("attention.v"),
                );
                attention_weights = cache.alpha.clone();
                attention = Some(cache);
                deep = ctx;
            } else {
                deep = vec![F::zero(); batch * width];
                let inv = F::one() / F::from_usize(t).unwrap();
                for b in 0..batch {
                    for ti in 0..t {
                        let row = &lstm_out[(b * t + ti) * width..(b * t + ti + 1) * width];
                        for (d, &h) in deep[b * width..(b + 1) * width].iter_mut().zip(row) {
                            *d += h * inv;
                        }
                    }
                }
            }
        } else {
            let inv = F::one() / F::from_usize(m * t).unwrap();
            deep = feature_maps
                .chunks_exact(m * t)
                .map(|plane| plane.iter().copied().sum::<F>() * inv)
                .collect();
        }
    }

    let mut hand_layers = Vec::new();
    let mut hand_mask = None;
    let mut hand_embedding = Vec::new();
    if v.uses_hand() {
        let mut x = hand.to_vec();
        let mut n_in = cfg.hand_dim;
        for (i, &n_out) in cfg.hand_hidden.iter().enumerate() {
            let p = format!("hand.dense{}", i + 1);
            let pre = L::dense_forward(
                batch,
                n_in,
                n_out,
                &x,
                params.get(&format!("{p}.w")),
                params.get(&format!("{p}.b")),
            );
            let (mut act, bn) = batchnorm(
                cfg,
                params,
                &format!("hand.bn{}", i + 1),
                mode,
                batch,
                n_out,
                1,
                &pre,
                &mut bn_updates,
            );
            L::relu_inplace(&mut act);
            hand_layers.push(HandLayerTrace {
                input: std::mem::replace(&mut x, act.clone()),
                bn,
                relu_out: act,
            });
            n_in = n_out;
        }
        hand_mask = L::dropout_mask(mode, cfg.hand_dropout, x.len(), rng);
        L::apply_mask(&mut x, &hand_mask);
        hand_embedding = x;
    }

    let (dw, hw) = (cfg.deep_width(), cfg.hand_width());
    let fused = concat_rows(&deep, dw, &hand_embedding, hw);
    let mut fusion_relu = Vec::new();
    let mut fusion_mask = None;
    let (head_in, head_width) = if v.uses_fusion() {
        let mut act = L::dense_forward(
            batch,
            cfg.fused_width(),
            cfg.fusion_hidden,
            &fused,
            params.get("fusion.w"),
            params.get("fusion.b"),
        );
        L::relu_inplace(&mut act);
        fusion_relu = act.clone();
        fusion_mask = L::dropout_mask(mode, cfg.fusion_dropout, act.len(), rng);
        L::apply_mask(&mut act, &fusion_mask);
        (act, cfg.fusion_hidden)
    } else {
        (fused.clone(), cfg.fused_width())
    };
    let logits = L::dense_forward(
        batch,
        head_width,
        cfg.n_classes,
        &head_in,
        params.get("classifier.w"),
        params.get("classifier.b"),
    );
    let probs = L::softmax_rows(&logits, cfg.n_classes);

    Ok(ForwardTrace {
        variant: v,
        mode,
        batch,
        conv,
        feature_maps,
        lstm,
        lstm_out,
        attention,
        attention_weights,
        deep,
        hand_layers,
        hand_mask,
        hand_embedding,
        fused,
        fusion_relu,
        fusion_mask,
        head_in,
        logits,
        probs,
        bn_updates,
    })
}

impl<F: Real> ForwardTrace<F> {
    /// Which piecewise-linear branch every ReLU and max-pool took.
    ///
    /// Two inputs with equal patterns lie in the same smooth region of the network.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let pos = |x: &[F]| x.iter().map(|&v| (v > F::zero()) as u32).collect::<Vec<_>>();
        let mut out = Vec::new();
        for c in &self.conv {
            out.extend(pos(&c.relu_out));
            out.extend_from_slice(&c.argmax);
        }
        for h in &self.hand_layers {
            out.extend(pos(&h.relu_out));
        }
        out.extend(pos(&self.fusion_relu));
        out
    }
}

/// Eval-mode class probabilities `[B, K]`.
pub fn predict<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    mel: &[F],
    hand: &[F],
    batch: usize,
) -> Result<Vec<F>> {
    // eval mode draws no dropout masks, so the rng is never consulted
    let mut rng = crate::rng::stream(0, crate::rng::Domain::Dropout, 0, 0);
    Ok(forward(params, cfg, mel, hand, batch, Mode::Eval, &mut rng)?.probs)
}

/// Eval-mode logits for a batch of hand vectors sharing one cached deep embedding.
///
/// `deep` is a single sample's deep embedding (empty for HandcraftedOnly).
pub fn logits_from_deep<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    deep: &[F],
    hand: &[F],
    batch: usize,
) -> Result<Vec<F>> {
    let v = cfg.variant;
    if !v.uses_hand() {
        return Err(Error::Unsupported(format!("variant {v} has no handcrafted branch")));
    }
    if deep.len() != cfg.deep_width() || hand.len() != batch * cfg.hand_dim {
        return Err(Error::shape(
            format!("deep {} and hand {}×{}", cfg.deep_width(), batch, cfg.hand_dim),
            format!("deep {} and hand {}", deep.len(), hand.len()),
        ));
    }
    let mut x = hand.to_vec();
    let mut n_in = cfg.hand_dim;
    let mut sink = Vec::new();
    for (i, &n_out) in cfg.hand_hidden.iter().enumerate() {
        let p = format!("hand.dense{}", i + 1);
        let pre = L::dense_forward(batch, n_in, n_out, &x, params.get(&format!("{p}.w")), params.get(&format!("{p}.b")));
        let (mut act, _) = batchnorm(cfg, params, &format!("hand.bn{}", i + 1), Mode::Eval, batch, n_out, 1, &pre, &mut sink);
        L::relu_inplace(&mut act);
        x = act;
        n_in = n_out;
    }
    let deep_rows: Vec<F> = deep.iter().copied().cycle().take(batch * deep.len()).collect();
    let fused = concat_rows(&deep_rows, cfg.deep_width(), &x, cfg.hand_width());
    let (head_in, width) = if v.uses_fusion() {
        let mut act = L::dense_forward(batch, cfg.fused_width(), cfg.fusion_hidden, &fused, params.get("fusion.w"), params.get("fusion.b"));
        L::relu_inplace(&mut act);
        (act, cfg.fusion_hidden)
    } else {
        (fused, cfg.fused_width())
    };
    Ok(L::dense_forward(batch, width, cfg.n_classes, &head_in, params.get("classifier.w"), params.get("classifier.b")))
}

/// Reverse pass for the objective whose gradient with respect to the logits is `d_logits`.
pub fn backward<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    trace: &ForwardTrace<F>,
    d_logits: &[F],
) -> Result<Gradients<F>> {
    let v = cfg.variant;
    let batch = trace.batch;
    if v != trace.variant {
        return Err(Error::InvalidInput("trace was produced by a different variant".into()));
    }
    if d_logits.len() != batch * cfg.n_classes {
        return Err(Error::shape(batch * cfg.n_classes, d_logits.len()));
    }
    let mut g = params.zeros_like();
    let head_width = if v.uses_fusion() { cfg.fusion_hidden } else { cfg.fused_width() };
    let (gw, gb) = two_mut(&mut g, "classifier.w", "classifier.b");
    let mut d_head = L::dense_backward(
        batch,
        head_width,
        cfg.n_classes,
        &trace.head_in,
        params.get("classifier.w"),
        d_logits,
        gw,
        gb,
    );
    let d_fused = if v.uses_fusion() {
        L::apply_mask(&mut d_head, &trace.fusion_mask);
        L::relu_backward_inplace(&trace.fusion_relu, &mut d_head);
        let (gw, gb) = two_mut(&mut g, "fusion.w", "fusion.b");
        L::dense_backward(
            batch,
            cfg.fused_width(),
            cfg.fusion_hidden,
            &trace.fused,
            params.get("fusion.w"),
            &d_head,
            gw,
            gb,
        )
    } else {
        d_head
    };
    let (dw, hw) = (cfg.deep_width(), cfg.hand_width());
    let (d_deep, d_hand_emb) = split_halves(&d_fused, batch, dw, hw);

    let mut d_hand = Vec::new();
    if v.uses_hand() {
        let mut d = d_hand_emb;
        L::apply_mask(&mut d, &trace.hand_mask);
        let mut n_in_list = vec![cfg.hand_dim];
        n_in_list.extend_from_slice(&cfg.hand_hidden);
        for (i, layer) in trace.hand_layers.iter().enumerate().rev() {
            let n_out = cfg.hand_hidden[i];
            let n_in = n_in_list[i];
            L::relu_backward_inplace(&layer.relu_out, &mut d);
            let bn = format!("hand.bn{}", i + 1);
            let (gg, gbeta) = two_mut(&mut g, &format!("{bn}.gamma"), &format!("{bn}.beta"));
            let d_pre = L::batchnorm_backward(
                &layer.bn,
                batch,
                n_out,
                1,
                params.get(&format!("{bn}.gamma")),
                &d,
                gg,
                gbeta,
            );
            let p = format!("hand.dense{}", i + 1);
            let (gw, gb) = two_mut(&mut g, &format!("{p}.w"), &format!("{p}.b"));
            d = L::dense_backward(
                batch,
                n_in,
                n_out,
                &layer.input,
                params.get(&format!("{p}.w")),
                &d_pre,
                gw,
                gb,
            );
        }
        d_hand = d;
    }

    let mut d_mel = Vec::new();
    let mut d_fm = Vec::new();
    if v.uses_mel() {
        let c = cfg.conv_channels();
        let (m, t) = cfg.feature_map_dims();
        if v.uses_lstm() {
            let width = 2 * cfg.lstm_units_per_direction;
            let d_h = if v.uses_attention() {
                let cache = trace.attention.as_ref().expect("attention cache");
                let [gw, gb, gv] = grads_mut(&mut g, ["attention.w", "attention.b", "attention.v"]);
                let d_h = L::attention_backward(
                    batch,
                    t,
                    width,
                    cfg.attention_dim,
                    &trace.lstm_out,
                    params.get("attention.w"),
                    params.get("attention.v"),
                    cache,
                    &d_deep,
                    gw,
                    gb,
                    gv,
                );
                d_h
            } else {
                let inv = F::one() / F::from_usize(t).unwrap();
                let mut d_h = vec![F::zero(); batch * t * width];
                for b in 0..batch {
                    for ti in 0..t {
                        for (dst, &src) in d_h[(b * t + ti) * width..(b * t + ti + 1) * width]
                            .iter_mut()
                            .zip(&d_deep[b * width..(b + 1) * width])
                        {
                            *dst = src * inv;
                        }
                    }
                }
                d_h
            };
            let h = cfg.lstm_units_per_direction;
            let d_in = cfg.lstm_input_dim();
            let lt = trace.lstm.as_ref().expect("lstm cache");
            let (d_hf, d_hb) = split_halves(&d_h, batch * t, h, h);
            let mut d_seq = vec![F::zero(); batch * t * d_in];
            for (dir, cache, d_out) in [("fwd", &lt.fwd, &d_hf), ("bwd", &lt.bwd, &d_hb)] {
                let names = [
                    format!("lstm.{dir}.w_ih"),
                    format!("lstm.{dir}.w_hh"),
                    format!("lstm.{dir}.bias"),
                ];
                let [gwi, gwh, gbias] = grads_mut(&mut g, [&names[0], &names[1], &names[2]]);
                let dx = L::lstm_backward(
                    batch,
                    t,
                    d_in,
                    h,
                    &lt.input,
                    params.get(&names[0]),
                    params.get(&names[1]),
                    cache,
                    d_out,
                    gwi,
                    gwh,
                    gbias,
                );
                d_seq.iter_mut().zip(dx).for_each(|(a, b)| *a += b);
            }
            d_fm = unflatten_frames(&d_seq, batch, c, m, t);
        } else {
            let inv = F::one() / F::from_usize(m * t).unwrap();
            d_fm = d_deep
                .iter()
                .flat_map(|&dv| std::iter::repeat_n(dv * inv, m * t))
                .collect();
        }

        let mut d = d_fm.clone();
        for (i, (blk, bt)) in cfg.conv_blocks.iter().zip(&trace.conv).enumerate().rev() {
            let geom = bt.geom;
            L::apply_mask(&mut d, &bt.mask);
            let mut d_act = L::maxpool_backward(batch * geom.c_out, geom.h, geom.w, blk.pool, &bt.argmax, &d);
            L::relu_backward_inplace(&bt.relu_out, &mut d_act);
            let p = format!("conv{}", i + 1);
            let bn = format!("{p}.bn");
            let (gg, gbeta) = two_mut(&mut g, &format!("{bn}.gamma"), &format!("{bn}.beta"));
            let d_pre = L::batchnorm_backward(
                &bt.bn,
                batch,
                geom.c_out,
                geom.h * geom.w,
                params.get(&format!("{bn}.gamma")),
                &d_act,
                gg,
                gbeta,
            );
            let (gk, gb) = two_mut(&mut g, &format!("{p}.kernel"), &format!("{p}.bias"));
            d = L::conv2d_backward(
                &geom,
                batch,
                &bt.input,
                params.get(&format!("{p}.kernel")),
                &d_pre,
                gk,
                gb,
                true,
            )
            .expect("input gradient requested");
        }
        d_mel = d;
    }

    Ok(Gradients {
        params: g,
        mel: d_mel,
        hand: d_hand,
        feature_maps: d_fm,
    })
}

/// Disjoint mutable access to several gradient tensors.
fn grads_mut<'a, F: Real, const N: usize>(g: &'a mut ModelParams<F>, names: [&str; N]) -> [&'a mut [F]; N] {
    let mut slots: [Option<&'a mut [F]>; N] = std::array::from_fn(|_| None);
    for t in g.tensors_mut().iter_mut() {
        if let Some(i) = names.iter().position(|n| *n == t.name) {
            slots[i] = Some(&mut t.data);
        }
    }
    slots.map(|s| s.expect("gradient tensor present in layout"))
}

fn two_mut<'a, F: Real>(g: &'a mut ModelParams<F>, a: &str, b: &str) -> (&'a mut [F], &'a mut [F]) {
    let [x, y] = grads_mut(g, [a, b]);
    (x, y)
}

/// Copy train-mode running statistics into the parameters.
pub fn apply_bn_updates<F: Real>(params: &mut ModelParams<F>, updates: &[BnUpdate<F>]) {
    for u in updates {
        params
            .get_mut(&format!("{}.running_mean", u.prefix))
            .copy_from_slice(&u.mean);
        params
            .get_mut(&format!("{}.running_var", u.prefix))
            .copy_from_slice(&u.var);
    }
}
