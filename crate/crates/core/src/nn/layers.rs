//! Layer kernels with explicit forward caches and exact backward passes.
//!
//! All tensors are flat row-major slices; shapes are passed alongside.

use rand::Rng;

use super::real::{matmul, matmul_at, matmul_bt, sigmoid, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------- conv 2d

/// Geometry of a stride-1, same-padded 2-D convolution over `[B, Cin, H, W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }
}

fn im2col<F: Real>(g: &ConvGeom, input: &[F], col: &mut [F]) {
    let pad = (g.k / 2) as isize;
    let (h, w) = (g.h as isize, g.w as isize);
    for ci in 0..g.c_in {
        let plane = &input[ci * g.hw()..(ci + 1) * g.hw()];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * g.hw()..(row + 1) * g.hw()];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y + dy;
                    let out_row = &mut dst[(y * w) as usize..((y + 1) * w) as usize];
                    if sy < 0 || sy >= h {
                        out_row.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src_row = &plane[(sy * w) as usize..((sy + 1) * w) as usize];
                    for x in 0..w {
                        let sx = x + dx;
                        out_row[x as usize] = if sx < 0 || sx >= w {
                            F::zero()
                        } else {
                            src_row[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<F: Real>(g: &ConvGeom, col: &[F], out: &mut [F]) {
    let pad = (g.k / 2) as isize;
    let (h, w) = (g.h as isize, g.w as isize);
    for ci in 0..g.c_in {
        let plane = &mut out[ci * g.hw()..(ci + 1) * g.hw()];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * g.hw()..(row + 1) * g.hw()];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x + dx;
                        if sx >= 0 && sx < w {
                            plane[(sy * w + sx) as usize] += src[(y * w + x) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// `out[B, Cout, H, W] = conv(input) + bias`.
pub fn conv2d_forward<F: Real>(
    g: &ConvGeom,
    batch: usize,
    input: &[F],
    kernel: &[F],
    bias: &[F],
) -> Vec<F> {
    let in_sz = g.c_in * g.hw();
    let out_sz = g.c_out * g.hw();
    let mut out = vec![F::zero(); batch * out_sz];
    let mut col = vec![F::zero(); g.patch() * g.hw()];
    for b in 0..batch {
        im2col(g, &input[b * in_sz..(b + 1) * in_sz], &mut col);
        let o = &mut out[b * out_sz..(b + 1) * out_sz];
        for (co, &bv) in bias.iter().enumerate() {
            o[co * g.hw()..(co + 1) * g.hw()]
                .iter_mut()
                .for_each(|v| *v = bv);
        }
        matmul(g.c_out, g.patch(), g.hw(), kernel, &col, o, true);
    }
    out
}

/// Accumulates kernel/bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<F: Real>(
    g: &ConvGeom,
    batch: usize,
    input: &[F],
    kernel: &[F],
    d_out: &[F],
    d_kernel: &mut [F],
    d_bias: &mut [F],
    want_input_grad: bool,
) -> Option<Vec<F>> {
    let in_sz = g.c_in * g.hw();
    let out_sz = g.c_out * g.hw();
    let mut col = vec![F::zero(); g.patch() * g.hw()];
    let mut d_in = want_input_grad.then(|| vec![F::zero(); batch * in_sz]);
    let mut d_col = vec![F::zero(); if want_input_grad { g.patch() * g.hw() } else { 0 }];
    for b in 0..batch {
        let dy = &d_out[b * out_sz..(b + 1) * out_sz];
        for co in 0..g.c_out {
            d_bias[co] += dy[co * g.hw()..(co + 1) * g.hw()].iter().copied().sum::<F>();
        }
        im2col(g, &input[b * in_sz..(b + 1) * in_sz], &mut col);
        matmul_bt(g.c_out, g.hw(), g.patch(), dy, &col, d_kernel, true);
        if let Some(d_in) = d_in.as_mut() {
            matmul_at(g.patch(), g.c_out, g.hw(), kernel, dy, &mut d_col, false);
            col2im(g, &d_col, &mut d_in[b * in_sz..(b + 1) * in_sz]);
        }
    }
    d_in
}

// ---------------------------------------------------------------- batch norm

#[derive(Debug, Clone, Copy)]
pub struct NormSpec<F> {
    pub eps: F,
    pub momentum: F,
}

/// Cache for a batch-norm over `[B, C, S]` (S = spatial positions, 1 for dense).
#[derive(Debug, Clone)]
pub struct NormCache<F> {
    pub xhat: Vec<F>,
    pub inv_std: Vec<F>,
    pub mode: Mode,
}

#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<F: Real>(
    spec: NormSpec<F>,
    mode: Mode,
    batch: usize,
    channels: usize,
    spatial: usize,
    x: &[F],
    gamma: &[F],
    beta: &[F],
    running_mean: &mut [F],
    running_var: &mut [F],
) -> (Vec<F>, NormCache<F>) {
    let n = F::from_usize(batch * spatial).unwrap();
    let mut y = vec![F::zero(); x.len()];
    let mut xhat = vec![F::zero(); x.len()];
    let mut inv_std = vec![F::zero(); channels];
    let idx = |b: usize, c: usize| (b * channels + c) * spatial;
    for c in 0..channels {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut s = F::zero();
                for b in 0..batch {
                    s += x[idx(b, c)..idx(b, c) + spatial].iter().copied().sum::<F>();
                }
                let mean = s / n;
                let mut v = F::zero();
                for b in 0..batch {
                    for &xv in &x[idx(b, c)..idx(b, c) + spatial] {
                        v += (xv - mean) * (xv - mean);
                    }
                }
                let var = v / n;
                running_mean[c] = spec.momentum * running_mean[c] + (F::one() - spec.momentum) * mean;
                running_var[c] = spec.momentum * running_var[c] + (F::one() - spec.momentum) * var;
                (mean, var)
            }
            Mode::Eval => (running_mean[c], running_var[c]),
        };
        let is = F::one() / (var + spec.eps).sqrt();
        inv_std[c] = is;
        for b in 0..batch {
            let r = idx(b, c)..idx(b, c) + spatial;
            for i in r {
                let h = (x[i] - mean) * is;
                xhat[i] = h;
                y[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (y, NormCache { xhat, inv_std, mode })
}

#[allow(clippy::too_many_arguments)]
pub fn batchnorm_backward<F: Real>(
    cache: &NormCache<F>,
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[F],
    dy: &[F],
    d_gamma: &mut [F],
    d_beta: &mut [F],
) -> Vec<F> {
    let n = F::from_usize(batch * spatial).unwrap();
    let mut dx = vec![F::zero(); dy.len()];
    let idx = |b: usize, c: usize| (b * channels + c) * spatial;
    for c in 0..channels {
        let mut sum_dy = F::zero();
        let mut sum_dy_xhat = F::zero();
        for b in 0..batch {
            for i in idx(b, c)..idx(b, c) + spatial {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * cache.xhat[i];
            }
        }
        d_gamma[c] += sum_dy_xhat;
        d_beta[c] += sum_dy;
        let scale = gamma[c] * cache.inv_std[c];
        for b in 0..batch {
            for i in idx(b, c)..idx(b, c) + spatial {
                dx[i] = match cache.mode {
                    Mode::Train => scale * (dy[i] - sum_dy / n - cache.xhat[i] * sum_dy_xhat / n),
                    Mode::Eval => scale * dy[i],
                };
            }
        }
    }
    dx
}

// ---------------------------------------------------------------- elementwise

pub fn relu_inplace<F: Real>(x: &mut [F]) {
    x.iter_mut().for_each(|v| {
        if *v < F::zero() {
            *v = F::zero()
        }
    });
}

/// Zero gradients where the forward output was not positive.
pub fn relu_backward_inplace<F: Real>(out: &[F], d: &mut [F]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= F::zero() {
            *g = F::zero();
        }
    }
}

/// Inverted dropout mask: entries are 0 or `1/(1-p)`. `None` when inactive.
pub fn dropout_mask<F: Real, R: Rng + ?Sized>(
    mode: Mode,
    p: f64,
    len: usize,
    rng: &mut R,
) -> Option<Vec<F>> {
    if mode == Mode::Eval || p <= 0.0 {
        return None;
    }
    let keep = F::from_f64_lossy(1.0 / (1.0 - p));
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { F::zero() } else { keep })
            .collect(),
    )
}

pub fn apply_mask<F: Real>(x: &mut [F], mask: &Option<Vec<F>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
    }
}

// ---------------------------------------------------------------- max pool

/// Non-overlapping `pool × pool` max pooling with floor division of the extent.
pub fn maxpool_forward<F: Real>(
    batch_channels: usize,
    h: usize,
    w: usize,
    pool: usize,
    x: &[F],
) -> (Vec<F>, Vec<u32>) {
    let (oh, ow) = (h / pool, w / pool);
    let mut out = vec![F::zero(); batch_channels * oh * ow];
    let mut arg = vec![0u32; out.len()];
    for p in 0..batch_channels {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = F::neg_infinity();
                let mut best_i = 0usize;
                for dy in 0..pool {
                    for dx in 0..pool {
                        let i = (oy * pool + dy) * w + ox * pool + dx;
                        if plane[i] > best {
                            best = plane[i];
                            best_i = i;
                        }
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<F: Real>(
    batch_channels: usize,
    h: usize,
    w: usize,
    pool: usize,
    arg: &[u32],
    d_out: &[F],
) -> Vec<F> {
    let (oh, ow) = (h / pool, w / pool);
    let mut d = vec![F::zero(); batch_channels * h * w];
    for p in 0..batch_channels {
        for o in 0..oh * ow {
            let i = p * oh * ow + o;
            d[p * h * w + arg[i] as usize] += d_out[i];
        }
    }
    d
}

// ---------------------------------------------------------------- dense

/// `y[B, out] = x[B, in] · Wᵀ + b` with `W: [out, in]`.
pub fn dense_forward<F: Real>(batch: usize, n_in: usize, n_out: usize, x: &[F], w: &[F], b: &[F]) -> Vec<F> {
    let mut y = vec![F::zero(); batch * n_out];
    for row in y.chunks_exact_mut(n_out) {
        row.copy_from_slice(b);
    }
    matmul_bt(batch, n_in, n_out, x, w, &mut y, true);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<F: Real>(
    batch: usize,
    n_in: usize,
    n_out: usize,
    x: &[F],
    w: &[F],
    dy: &[F],
    dw: &mut [F],
    db: &mut [F],
) -> Vec<F> {
    matmul_at(n_out, batch, n_in, dy, x, dw, true);
    for row in dy.chunks_exact(n_out) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![F::zero(); batch * n_in];
    matmul(batch, n_out, n_in, dy, w, &mut dx, false);
    dx
}

// ---------------------------------------------------------------- softmax

pub fn softmax_rows<F: Real>(x: &[F], width: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for (row, o) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut s = F::zero();
        for (oi, &v) in o.iter_mut().zip(row) {
            *oi = (v - m).exp();
            s += *oi;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
    out
}

// ---------------------------------------------------------------- LSTM

/// One LSTM direction over `[B, T, D]`; gate order `[i, f, g, o]`.
#[derive(Debug, Clone)]
pub struct LstmCache<F> {
    /// Post-activation gates per step, `[T][B, 4H]` in processing order.
    gates: Vec<Vec<F>>,
    /// Cell states per step, `[T][B, H]` in processing order.
    cells: Vec<Vec<F>>,
    /// Hidden states per step, `[T][B, H]` in processing order.
    hidden: Vec<Vec<F>>,
    reverse: bool,
}

fn time_index(step: usize, t_len: usize, reverse: bool) -> usize {
    if reverse {
        t_len - 1 - step
    } else {
        step
    }
}

/// Returns hidden outputs `[B, T, H]` placed at their original time positions.
#[allow(clippy::too_many_arguments)]
pub fn lstm_forward<F: Real>(
    batch: usize,
    t_len: usize,
    d_in: usize,
    hidden: usize,
    x: &[F],
    w_ih: &[F],
    w_hh: &[F],
    bias: &[F],
    reverse: bool,
) -> (Vec<F>, LstmCache<F>) {
    let g4 = 4 * hidden;
    // input projections for every (b, t) at once
    let mut zx = vec![F::zero(); batch * t_len * g4];
    matmul_bt(batch * t_len, d_in, g4, x, w_ih, &mut zx, false);
    let mut out = vec![F::zero(); batch * t_len * hidden];
    let mut h_prev = vec![F::zero(); batch * hidden];
    let mut c_prev = vec![F::zero(); batch * hidden];
    let mut cache = LstmCache {
        gates: Vec::with_capacity(t_len),
        cells: Vec::with_capacity(t_len),
        hidden: Vec::with_capacity(t_len),
        reverse,
    };
    for step in 0..t_len {
        let t = time_index(step, t_len, reverse);
        let mut z = vec![F::zero(); batch * g4];
        for b in 0..batch {
            let src = &zx[(b * t_len + t) * g4..(b * t_len + t + 1) * g4];
            let dst = &mut z[b * g4..(b + 1) * g4];
            for j in 0..g4 {
                dst[j] = src[j] + bias[j];
            }
        }
        matmul_bt(batch, hidden, g4, &h_prev, w_hh, &mut z, true);
        let mut c = vec![F::zero(); batch * hidden];
        let mut h = vec![F::zero(); batch * hidden];
        for b in 0..batch {
            let zb = &mut z[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let i_g = sigmoid(zb[j]);
                let f_g = sigmoid(zb[hidden + j]);
                let g_g = zb[2 * hidden + j].tanh();
                let o_g = sigmoid(zb[3 * hidden + j]);
                zb[j] = i_g;
                zb[hidden + j] = f_g;
                zb[2 * hidden + j] = g_g;
                zb[3 * hidden + j] = o_g;
                let cv = f_g * c_prev[b * hidden + j] + i_g * g_g;
                c[b * hidden + j] = cv;
                h[b * hidden + j] = o_g * cv.tanh();
            }
            out[(b * t_len + t) * hidden..(b * t_len + t + 1) * hidden]
                .copy_from_slice(&h[b * hidden..(b + 1) * hidden]);
        }
        cache.gates.push(z);
        cache.cells.push(c.clone());
        cache.hidden.push(h.clone());
        h_prev = h;
        c_prev = c;
    }
    (out, cache)
}

/// Accumulates weight gradients; returns the input gradient `[B, T, D]`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward<F: Real>(
    batch: usize,
    t_len: usize,
    d_in: usize,
    hidden: usize,
    x: &[F],
    w_ih: &[F],
    w_hh: &[F],
    cache: &LstmCache<F>,
    d_out: &[F],
    d_w_ih: &mut [F],
    d_w_hh: &mut [F],
    d_bias: &mut [F],
) -> Vec<F> {
    let g4 = 4 * hidden;
    let mut dz_all = vec![F::zero(); batch * t_len * g4];
    let mut dh_next = vec![F::zero(); batch * hidden];
    let mut dc_next = vec![F::zero(); batch * hidden];
    let zeros = vec![F::zero(); batch * hidden];
    for step in (0..t_len).rev() {
        let t = time_index(step, t_len, cache.reverse);
        let gates = &cache.gates[step];
        let c = &cache.cells[step];
        let c_prev = if step > 0 { &cache.cells[step - 1] } else { &zeros };
        let h_prev = if step > 0 { &cache.hidden[step - 1] } else { &zeros };
        let mut dz = vec![F::zero(); batch * g4];
        for b in 0..batch {
            for j in 0..hidden {
                let k = b * hidden + j;
                let gb = &gates[b * g4..(b + 1) * g4];
                let (i_g, f_g, g_g, o_g) = (gb[j], gb[hidden + j], gb[2 * hidden + j], gb[3 * hidden + j]);
                let dh = d_out[(b * t_len + t) * hidden + j] + dh_next[k];
                let tc = c[k].tanh();
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o_g * (F::one() - tc * tc);
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f_g;
                let dzb = &mut dz[b * g4..(b + 1) * g4];
                dzb[j] = d_i * i_g * (F::one() - i_g);
                dzb[hidden + j] = d_f * f_g * (F::one() - f_g);
                dzb[2 * hidden + j] = d_g * (F::one() - g_g * g_g);
                dzb[3 * hidden + j] = d_o * o_g * (F::one() - o_g);
            }
        }
        // recurrent weights and the gradient flowing to the previous step
        matmul_at(g4, batch, hidden, &dz, h_prev, d_w_hh, true);
        matmul(batch, g4, hidden, &dz, w_hh, &mut dh_next, false);
        for b in 0..batch {
            let dzb = &dz[b * g4..(b + 1) * g4];
            for (g, &d) in d_bias.iter_mut().zip(dzb) {
                *g += d;
            }
            dz_all[(b * t_len + t) * g4..(b * t_len + t + 1) * g4].copy_from_slice(dzb);
        }
    }
    matmul_at(g4, batch * t_len, d_in, &dz_all, x, d_w_ih, true);
    let mut dx = vec![F::zero(); batch * t_len * d_in];
    matmul(batch * t_len, g4, d_in, &dz_all, w_ih, &mut dx, false);
    dx
}

// ---------------------------------------------------------------- attention

/// Additive attention cache for one batch.
#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    /// `tanh(W h_t + b)`, `[B, T, A]`.
    pub u: Vec<F>,
    /// Attention weights `[B, T]`.
    pub alpha: Vec<F>,
}

/// Scores `e_t = vᵀ tanh(W h_t + b)`, weights `α = softmax(e)`, context `c = Σ α_t h_t`.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward<F: Real>(
    batch: usize,
    t_len: usize,
    width: usize,
    att: usize,
    h: &[F],
    w: &[F],
    b: &[F],
    v: &[F],
) -> (Vec<F>, AttentionCache<F>) {
    let u_pre = dense_forward(batch * t_len, width, att, h, w, b);
    let u: Vec<F> = u_pre.iter().map(|x| x.tanh()).collect();
    let mut scores = vec![F::zero(); batch * t_len];
    for (s, row) in scores.iter_mut().zip(u.chunks_exact(att)) {
        *s = row.iter().zip(v).map(|(a, c)| *a * *c).sum();
    }
    let alpha = softmax_rows(&scores, t_len);
    let mut ctx = vec![F::zero(); batch * width];
    for bi in 0..batch {
        for t in 0..t_len {
            let a = alpha[bi * t_len + t];
            let ht = &h[(bi * t_len + t) * width..(bi * t_len + t + 1) * width];
            for (c, &hv) in ctx[bi * width..(bi + 1) * width].iter_mut().zip(ht) {
                *c += a * hv;
            }
        }
    }
    (ctx, AttentionCache { u, alpha })
}

#[allow(clippy::too_many_arguments)]
pub fn attention_backward<F: Real>(
    batch: usize,
    t_len: usize,
    width: usize,
    att: usize,
    h: &[F],
    w: &[F],
    v: &[F],
    cache: &AttentionCache<F>,
    d_ctx: &[F],
    d_w: &mut [F],
    d_b: &mut [F],
    d_v: &mut [F],
) -> Vec<F> {
    let mut dh = vec![F::zero(); h.len()];
    let mut d_pre = vec![F::zero(); batch * t_len * att];
    for bi in 0..batch {
        let dc = &d_ctx[bi * width..(bi + 1) * width];
        let alpha = &cache.alpha[bi * t_len..(bi + 1) * t_len];
        let mut d_alpha = vec![F::zero(); t_len];
        for t in 0..t_len {
            let r = (bi * t_len + t) * width;
            let ht = &h[r..r + width];
            d_alpha[t] = ht.iter().zip(dc).map(|(a, c)| *a * *c).sum();
            for (g, &c) in dh[r..r + width].iter_mut().zip(dc) {
                *g += alpha[t] * c;
            }
        }
        let dot: F = alpha.iter().zip(&d_alpha).map(|(a, d)| *a * *d).sum();
        for t in 0..t_len {
            let de = alpha[t] * (d_alpha[t] - dot);
            let r = (bi * t_len + t) * att;
            let ut = &cache.u[r..r + att];
            for j in 0..att {
                d_v[j] += de * ut[j];
                d_pre[r + j] = de * v[j] * (F::one() - ut[j] * ut[j]);
            }
        }
    }
    let dh_att = dense_backward(batch * t_len, width, att, h, w, &d_pre, d_w, d_b);
    for (a, b) in dh.iter_mut().zip(dh_att) {
        *a += b;
    }
    dh
}
