use std::collections::BTreeMap;

use super::{AttributionMap, Method};
use crate::error::{Error, Result};
use crate::labels::Class;
use crate::model::{backward, forward, ModelConfig, ModelParams};
use crate::nn::Mode;
use crate::rng::{stream, Domain};

/// `ReLU(Σ_k α_k A_k)` with `α_k` the spatial mean of `∂y/∂A_k`; maps are `[C, H, W]`.
pub fn cam_from_maps(maps: &[f64], grads: &[f64], channels: usize) -> Vec<f64> {
    let hw = maps.len() / channels;
    let mut cam = vec![0.0; hw];
    for k in 0..channels {
        let a = &maps[k * hw..(k + 1) * hw];
        let alpha = grads[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64;
        for (c, &v) in cam.iter_mut().zip(a) {
            *c += alpha * v;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    cam
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |dst: usize, n_in: usize, n_out: usize| {
        let x = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out[y * out_w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Rescale to `[0, 1]`; a constant map becomes all zeros. Returns whether it was constant.
pub fn min_max_normalize(v: &mut [f64]) -> bool {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        v.iter_mut().for_each(|x| *x = 0.0);
        return true;
    }
    v.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
    false
}

/// Grad-CAM over the final conv block for one sample, upsampled to the mel grid.
pub fn grad_cam(
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    mel: &[f64],
    hand: &[f64],
    target: Class,
) -> Result<AttributionMap> {
    if !cfg.variant.uses_mel() {
        return Err(Error::Unsupported(format!("Grad-CAM needs conv layers; variant {} has none", cfg.variant)));
    }
    let mut rng = stream(0, Domain::Dropout, 0, 0);
    let trace = forward(params, cfg, mel, hand, 1, Mode::Eval, &mut rng)?;
    let mut up = vec![0.0; cfg.n_classes];
    up[target.index()] = 1.0;
    let g = backward(params, cfg, &trace, &up)?;
    if g.feature_maps.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Grad-CAM feature-map gradient".into()));
    }
    let (m, t) = cfg.feature_map_dims();
    let raw = cam_from_maps(&trace.feature_maps, &g.feature_maps, cfg.conv_channels());
    let raw_max = raw.iter().copied().fold(0.0, f64::max);
    let mut values = bilinear_resize(&raw, m, t, cfg.input_mels, cfg.input_frames);
    let constant = min_max_normalize(&mut values);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("raw_max".into(), raw_max);
    diagnostics.insert("constant_map".into(), constant as u8 as f64);
    diagnostics.insert("target_logit".into(), trace.logits[target.index()]);
    Ok(AttributionMap {
        method: Method::GradCam,
        target_class: target,
        clip_id: None,
        shape: vec![cfg.input_mels, cfg.input_frames],
        baseline: "none".into(),
        diagnostics,
        feature_names: None,
        standard_errors: None,
        note: Some(format!("final conv block {m}x{t} map, bilinearly upsampled and min-max normalized")),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_channel_reduces_to_relu_of_the_map() {
        let a = [0.5, -1.0, 2.0, 0.0, -0.2, 1.5];
        let pos = cam_from_maps(&a, &[0.3; 6], 1);
        for (c, &v) in pos.iter().zip(&a) {
            assert!((c - 0.3 * v.max(0.0)).abs() < 1e-15);
        }
        let neg = cam_from_maps(&a, &[-2.0; 6], 1);
        for (c, &v) in neg.iter().zip(&a) {
            assert!((c - (-2.0 * v).max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn resize_preserves_constants_and_corners() {
        let src = [1.0, 2.0, 3.0, 4.0];
        let out = bilinear_resize(&src, 2, 2, 4, 4);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[15], 4.0);
        assert!(bilinear_resize(&[0.7; 6], 2, 3, 5, 7).iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn normalization_hits_both_ends() {
        let mut v = vec![0.2, 0.9, 0.5];
        assert!(!min_max_normalize(&mut v));
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        let mut c = vec![0.4; 3];
        assert!(min_max_normalize(&mut c));
        assert!(c.iter().all(|&x| x == 0.0));
    }
}
