use crate::model::{ModelParams, ParamKind};
use crate::nn::Real;

pub const LOG_CLAMP: f64 = 1e-12;

/// Mean label-smoothed cross-entropy and its gradient with respect to the logits.
///
/// `probs` are softmax outputs `[B, C]`; targets are `(1-ε)·onehot + ε/C`.
pub fn smoothed_scce<F: Real>(probs: &[F], labels: &[usize], n_classes: usize, eps: f64) -> (f64, Vec<F>) {
    let batch = labels.len();
    assert_eq!(probs.len(), batch * n_classes);
    let mut loss = 0.0;
    let mut d_logits = vec![F::zero(); probs.len()];
    let inv_b = 1.0 / batch as f64;
    for (b, &y) in labels.iter().enumerate() {
        let p = &probs[b * n_classes..(b + 1) * n_classes];
        // dL/dp_c, zero where the clamp is active
        let mut g = vec![0.0; n_classes];
        for c in 0..n_classes {
            let q = (if c == y { 1.0 - eps } else { 0.0 }) + eps / n_classes as f64;
            let pc = p[c].to_f64_lossy();
            loss -= q * pc.max(LOG_CLAMP).ln() * inv_b;
            if pc > LOG_CLAMP {
                g[c] = -q / pc * inv_b;
            }
        }
        let dot: f64 = (0..n_classes).map(|c| p[c].to_f64_lossy() * g[c]).sum();
        for c in 0..n_classes {
            d_logits[b * n_classes + c] = F::from_f64_lossy(p[c].to_f64_lossy() * (g[c] - dot));
        }
    }
    (loss, d_logits)
}

/// `λ·Σ‖W‖²` over weight tensors (conv kernels, dense and recurrent matrices, attention vector).
pub fn l2_penalty<F: Real>(params: &ModelParams<F>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda
        * params
            .tensors()
            .iter()
            .filter(|t| t.kind == ParamKind::Weight)
            .flat_map(|t| t.data.iter())
            .map(|&w| {
                let w = w.to_f64_lossy();
                w * w
            })
            .sum::<f64>()
}

pub fn add_l2_gradient<F: Real>(grads: &mut ModelParams<F>, params: &ModelParams<F>, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    let two_l = F::from_f64_lossy(2.0 * lambda);
    for (g, p) in grads.tensors_mut().iter_mut().zip(params.tensors()) {
        if p.kind == ParamKind::Weight {
            for (gv, &pv) in g.data.iter_mut().zip(&p.data) {
                *gv += two_l * pv;
            }
        }
    }
}

pub fn total_loss<F: Real>(data_loss: f64, params: &ModelParams<F>, lambda: f64) -> f64 {
    data_loss + l2_penalty(params, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tensor;

    #[test]
    fn uniform_probabilities_give_ln5() {
        for eps in [0.0, 0.05, 0.3] {
            let (l, _) = smoothed_scce(&[0.2f64; 10], &[1, 4], 5, eps);
            assert!((l - 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_p_minus_q_without_clamping() {
        let p = [0.7f64, 0.1, 0.1, 0.05, 0.05];
        let (_, g) = smoothed_scce(&p, &[0], 5, 0.05);
        let q = [0.96, 0.01, 0.01, 0.01, 0.01];
        for c in 0..5 {
            assert!((g[c] - (p[c] - q[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let (l, g) = smoothed_scce(&[1.0f64, 0.0, 0.0, 0.0, 0.0], &[1], 5, 0.0);
        assert!((l + LOG_CLAMP.ln()).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn penalty_counts_only_weights() {
        let p = ModelParams::from_tensors(vec![
            Tensor {
                name: "w".into(),
                kind: ParamKind::Weight,
                shape: vec![2, 2],
                data: vec![1.0f64, 2.0, 0.0, 1.0],
            },
            Tensor {
                name: "b".into(),
                kind: ParamKind::Bias,
                shape: vec![1],
                data: vec![10.0],
            },
            Tensor {
                name: "g".into(),
                kind: ParamKind::BnScale,
                shape: vec![1],
                data: vec![3.0],
            },
        ])
        .unwrap();
        assert!((l2_penalty(&p, 1e-4) - 6e-4).abs() < 1e-15);
        assert_eq!(total_loss(0.5, &p, 0.0), 0.5);
        let mut g = p.zeros_like();
        add_l2_gradient(&mut g, &p, 0.5);
        assert_eq!(g.get("w"), &[1.0, 2.0, 0.0, 1.0]);
        assert_eq!(g.get("b"), &[0.0]);
    }
}
