//! Forward and reverse-mode backward passes of the pre-layer-norm decoder.
//!
//! ```text
//! x   = tok_emb[tokens] + pos_emb[0..T]
//! for each block:
//!     x = x + Wo · attn(LN1(x), mask)
//!     x = x + W_down · gelu(W_up · LN2(x) + b_up) + b_down
//! logits = LNf(x) · headᵀ
//! ```
//!
//! Disallowed attention scores are set to `-inf` before the row softmax, so
//! their post-softmax weight is exactly zero and no value from a masked key
//! enters the sum.

use super::config::ModelConfig;
use super::linalg::{add_matmul_at, dot, matmul, matmul_bt};
use super::loss::weighted_nll_with_grad;
use super::mask::AttentionMask;
use super::params::{Gradients, LayerParams, ModelParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], rows: usize, d: usize) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (row[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c] + bias[c];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Accumulates gain/bias gradients and returns `∂L/∂x`.
fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    rows: usize,
    d: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for c in 0..d {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dot(&dxhat, xh) / d as f64;
        let rs = cache.rstd[r];
        for c in 0..d {
            dx[r * d + c] = rs * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

struct LayerCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per head, dense `[T×T]` post-softmax weights; zero where masked.
    probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    ln2: LnCache,
    b: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

/// Intermediate activations of one forward pass, kept for the backward pass
/// and for inspection in tests.
pub struct ForwardCache {
    config: ModelConfig,
    tokens: Vec<usize>,
    mask: AttentionMask,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hf: Vec<f64>,
}

impl ForwardCache {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    /// Post-softmax attention weights of `(layer, head)`, row-major `[T×T]`.
    pub fn attention(&self, layer: usize, head: usize) -> &[f64] {
        &self.layers[layer].probs[head]
    }

    /// Value vectors `[T×d_model]` of `layer`.
    pub fn values(&self, layer: usize) -> &[f64] {
        &self.layers[layer].v
    }

    /// Attention context (before the output projection) `[T×d_model]`.
    pub fn context(&self, layer: usize) -> &[f64] {
        &self.layers[layer].ctx
    }
}

fn check_inputs(params: &ModelParams, tokens: &[usize], mask: &AttentionMask) -> Result<()> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(Error::Length("empty token sequence".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    if mask.len() != tokens.len() {
        return Err(Error::Mask(format!(
            "mask is {}×{} but sequence has length {}",
            mask.len(),
            mask.len(),
            tokens.len()
        )));
    }
    Ok(())
}

fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    mask: &AttentionMask,
    cfg: &ModelConfig,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let t = mask.len();
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = vec![0.0; t * d];
    let mut all_probs = Vec::with_capacity(cfg.n_heads);
    let mut scores = vec![0.0; t];
    for h in 0..cfg.n_heads {
        let off = h * dh;
        let mut probs = vec![0.0; t * t];
        for i in 0..t {
            let qi = &q[i * d + off..i * d + off + dh];
            let mut max = f64::NEG_INFINITY;
            for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
                *s = if mask.allowed(i, j) {
                    dot(qi, &k[j * d + off..j * d + off + dh]) * scale
                } else {
                    f64::NEG_INFINITY
                };
                max = max.max(*s);
            }
            let mut sum = 0.0;
            for j in 0..=i {
                let e = (scores[j] - max).exp();
                probs[i * t + j] = e;
                sum += e;
            }
            let ci = &mut ctx[i * d + off..i * d + off + dh];
            for j in 0..=i {
                let p = probs[i * t + j] / sum;
                probs[i * t + j] = p;
                if p != 0.0 {
                    for (c, &vv) in ci.iter_mut().zip(&v[j * d + off..j * d + off + dh]) {
                        *c += p * vv;
                    }
                }
            }
        }
        all_probs.push(probs);
    }
    (all_probs, ctx)
}

fn layer_forward(
    x: &mut [f64],
    lp: &LayerParams,
    mask: &AttentionMask,
    cfg: &ModelConfig,
) -> LayerCache {
    let t = mask.len();
    let d = cfg.d_model;
    let f = cfg.d_ff;
    let (a, ln1) = layer_norm(x, lp.ln1_gain.data(), lp.ln1_bias.data(), t, d);
    let q = matmul(&a, lp.w_q.data(), t, d, d);
    let k = matmul(&a, lp.w_k.data(), t, d, d);
    let v = matmul(&a, lp.w_v.data(), t, d, d);
    let (probs, ctx) = attention_forward(&q, &k, &v, mask, cfg);
    let attn_out = matmul(&ctx, lp.w_o.data(), t, d, d);
    for (xi, o) in x.iter_mut().zip(&attn_out) {
        *xi += o;
    }
    let (b, ln2) = layer_norm(x, lp.ln2_gain.data(), lp.ln2_bias.data(), t, d);
    let mut u = matmul(&b, lp.w_up.data(), t, d, f);
    for r in 0..t {
        for (uu, bb) in u[r * f..(r + 1) * f].iter_mut().zip(lp.b_up.data()) {
            *uu += bb;
        }
    }
    let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
    let m = matmul(&g, lp.w_down.data(), t, f, d);
    for r in 0..t {
        for c in 0..d {
            x[r * d + c] += m[r * d + c] + lp.b_down.data()[c];
        }
    }
    LayerCache {
        ln1,
        a,
        q,
        k,
        v,
        probs,
        ctx,
        ln2,
        b,
        u,
        g,
    }
}

/// Logits `[T×V]`; row `t` scores the token that follows position `t`.
pub fn forward(params: &ModelParams, tokens: &[usize], mask: &AttentionMask) -> Result<Tensor> {
    forward_cached(params, tokens, mask).map(|(logits, _)| logits)
}

/// Like [`forward`], also returning the activations needed by
/// [`backward_from_logits`].
pub fn forward_cached(
    params: &ModelParams,
    tokens: &[usize],
    mask: &AttentionMask,
) -> Result<(Tensor, ForwardCache)> {
    check_inputs(params, tokens, mask)?;
    let cfg = params.config;
    let t = tokens.len();
    let d = cfg.d_model;
    let mut x = vec![0.0; t * d];
    for (pos, &tok) in tokens.iter().enumerate() {
        let te = params.tok_emb.row(tok);
        let pe = params.pos_emb.row(pos);
        for c in 0..d {
            x[pos * d + c] = te[c] + pe[c];
        }
    }
    let layers: Vec<LayerCache> = params
        .layers
        .iter()
        .map(|lp| layer_forward(&mut x, lp, mask, &cfg))
        .collect();
    let (hf, lnf) = layer_norm(&x, params.lnf_gain.data(), params.lnf_bias.data(), t, d);
    let logits = matmul_bt(&hf, params.head.data(), t, d, cfg.vocab_size);
    let logits = Tensor::from_vec(&[t, cfg.vocab_size], logits)?;
    Ok((
        logits,
        ForwardCache {
            config: cfg,
            tokens: tokens.to_vec(),
            mask: mask.clone(),
            layers,
            lnf,
            hf,
        },
    ))
}

/// Reverse-mode pass given `∂L/∂logits` (`[T×V]`).
pub fn backward_from_logits(
    params: &ModelParams,
    cache: &ForwardCache,
    dlogits: &[f64],
) -> Result<Gradients> {
    let cfg = cache.config;
    let t = cache.seq_len();
    let d = cfg.d_model;
    let v_size = cfg.vocab_size;
    if dlogits.len() != t * v_size {
        return Err(Error::Shape(format!(
            "dlogits has {} entries, expected {}",
            dlogits.len(),
            t * v_size
        )));
    }
    let mut grads = Gradients::zeros(&cfg)?;

    add_matmul_at(grads.head.data_mut(), dlogits, &cache.hf, t, v_size, d);
    let dhf = matmul(dlogits, params.head.data(), t, v_size, d);
    let (g_lnf_gain, g_lnf_bias) = (&mut grads.0.lnf_gain, &mut grads.0.lnf_bias);
    let mut dx = layer_norm_backward(
        &dhf,
        &cache.lnf,
        params.lnf_gain.data(),
        g_lnf_gain.data_mut(),
        g_lnf_bias.data_mut(),
        t,
        d,
    );

    for (l, (lp, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut grads.0.layers[l];
        layer_backward(&mut dx, lp, lc, lg, &cache.mask, &cfg);
    }

    for (pos, &tok) in cache.tokens.iter().enumerate() {
        let row = &dx[pos * d..(pos + 1) * d];
        for (g, r) in grads.tok_emb.row_mut(tok).iter_mut().zip(row) {
            *g += r;
        }
        for (g, r) in grads.pos_emb.row_mut(pos).iter_mut().zip(row) {
            *g += r;
        }
    }
    Ok(grads)
}

/// `dx` holds `∂L/∂x_out` on entry and `∂L/∂x_in` on exit.
fn layer_backward(
    dx: &mut [f64],
    lp: &LayerParams,
    lc: &LayerCache,
    lg: &mut LayerParams,
    mask: &AttentionMask,
    cfg: &ModelConfig,
) {
    let t = mask.len();
    let d = cfg.d_model;
    let f = cfg.d_ff;

    // MLP branch
    add_matmul_at(lg.w_down.data_mut(), &lc.g, dx, t, f, d);
    for r in 0..t {
        for (bg, g) in lg.b_down.data_mut().iter_mut().zip(&dx[r * d..(r + 1) * d]) {
            *bg += g;
        }
    }
    let dg = matmul_bt(dx, lp.w_down.data(), t, d, f);
    let du: Vec<f64> = dg
        .iter()
        .zip(&lc.u)
        .map(|(g, &u)| g * gelu_grad(u))
        .collect();
    add_matmul_at(lg.w_up.data_mut(), &lc.b, &du, t, d, f);
    for r in 0..t {
        for (bg, g) in lg.b_up.data_mut().iter_mut().zip(&du[r * f..(r + 1) * f]) {
            *bg += g;
        }
    }
    let db = matmul_bt(&du, lp.w_up.data(), t, f, d);
    let dmid = layer_norm_backward(
        &db,
        &lc.ln2,
        lp.ln2_gain.data(),
        lg.ln2_gain.data_mut(),
        lg.ln2_bias.data_mut(),
        t,
        d,
    );
    for (a, b) in dx.iter_mut().zip(&dmid) {
        *a += b;
    }

    // attention branch
    add_matmul_at(lg.w_o.data_mut(), &lc.ctx, dx, t, d, d);
    let dctx = matmul_bt(dx, lp.w_o.data(), t, d, d);
    let (dq, dk, dv) = attention_backward(&dctx, lc, mask, cfg);
    add_matmul_at(lg.w_q.data_mut(), &lc.a, &dq, t, d, d);
    add_matmul_at(lg.w_k.data_mut(), &lc.a, &dk, t, d, d);
    add_matmul_at(lg.w_v.data_mut(), &lc.a, &dv, t, d, d);
    let mut da = matmul_bt(&dq, lp.w_q.data(), t, d, d);
    for (w, dproj) in [(&lp.w_k, &dk), (&lp.w_v, &dv)] {
        for (a, b) in da.iter_mut().zip(matmul_bt(dproj, w.data(), t, d, d)) {
            *a += b;
        }
    }
    let dxin = layer_norm_backward(
        &da,
        &lc.ln1,
        lp.ln1_gain.data(),
        lg.ln1_gain.data_mut(),
        lg.ln1_bias.data_mut(),
        t,
        d,
    );
    for (a, b) in dx.iter_mut().zip(&dxin) {
        *a += b;
    }
}

fn attention_backward(
    dctx: &[f64],
    lc: &LayerCache,
    mask: &AttentionMask,
    cfg: &ModelConfig,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = mask.len();
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut dp = vec![0.0; t];
    for h in 0..cfg.n_heads {
        let off = h * dh;
        let probs = &lc.probs[h];
        for i in 0..t {
            let dci = &dctx[i * d + off..i * d + off + dh];
            let mut weighted = 0.0;
            for j in 0..=i {
                let p = probs[i * t + j];
                if !mask.allowed(i, j) {
                    dp[j] = 0.0;
                    continue;
                }
                dp[j] = dot(dci, &lc.v[j * d + off..j * d + off + dh]);
                weighted += p * dp[j];
                for (g, &c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dci) {
                    *g += p * c;
                }
            }
            for j in 0..=i {
                if !mask.allowed(i, j) {
                    continue;
                }
                let ds = probs[i * t + j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..dh {
                    dq[i * d + off + c] += ds * lc.k[j * d + off + c];
                    dk[j * d + off + c] += ds * lc.q[i * d + off + c];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Loss `weighted_nll(forward(tokens), targets, weights)` and its exact
/// gradient with respect to every parameter.
pub fn backward(
    params: &ModelParams,
    tokens: &[usize],
    mask: &AttentionMask,
    targets: &[usize],
    weights: &[f64],
) -> Result<(f64, Gradients)> {
    let (logits, cache) = forward_cached(params, tokens, mask)?;
    let (loss, dlogits) = weighted_nll_with_grad(&logits, targets, weights)?;
    let grads = backward_from_logits(params, &cache, dlogits.data())?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_params;

    fn cfg(n_layers: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            d_model: 8,
            n_heads: 2,
            n_layers,
            d_ff: 16,
            max_seq_len: 8,
            init_seed: 3,
        }
    }

    #[test]
    fn logits_have_sequence_by_vocab_shape() {
        let p = init_params(&cfg(1)).unwrap();
        let logits = forward(&p, &[1, 2, 3, 4, 5], &AttentionMask::causal(5)).unwrap();
        assert_eq!(logits.shape(), &[5, 10]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = init_params(&cfg(1)).unwrap();
        assert!(matches!(
            forward(&p, &[1; 9], &AttentionMask::causal(9)),
            Err(Error::SequenceTooLong { .. })
        ));
        assert!(matches!(
            forward(&p, &[1, 10], &AttentionMask::causal(2)),
            Err(Error::TokenOutOfRange { .. })
        ));
        assert!(matches!(
            forward(&p, &[1, 2], &AttentionMask::causal(3)),
            Err(Error::Mask(_))
        ));
    }

    #[test]
    fn singleton_row_returns_own_value() {
        let p = init_params(&cfg(1)).unwrap();
        // row 2 attends only to itself
        let mask = AttentionMask::from_fn(4, |i, j| if i == 2 { j == 2 } else { j <= i }).unwrap();
        let (_, cache) = forward_cached(&p, &[1, 2, 3, 4], &mask).unwrap();
        let d = 8;
        assert_eq!(
            &cache.context(0)[2 * d..3 * d],
            &cache.values(0)[2 * d..3 * d]
        );
    }

    #[test]
    fn masked_weights_are_exactly_zero() {
        let p = init_params(&cfg(2)).unwrap();
        let mask = AttentionMask::from_fn(5, |i, j| j <= i && !(j == 2 && i > 2)).unwrap();
        let (_, cache) = forward_cached(&p, &[1, 2, 3, 4, 5], &mask).unwrap();
        for l in 0..2 {
            for h in 0..2 {
                let a = cache.attention(l, h);
                for i in 0..5 {
                    for j in 0..5 {
                        if !mask.allowed(i, j) {
                            assert_eq!(a[i * 5 + j], 0.0);
                        }
                    }
                    let s: f64 = a[i * 5..(i + 1) * 5].iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_layer_model_is_head_of_normed_embeddings() {
        let p = init_params(&cfg(0)).unwrap();
        let tokens = [4, 0, 9];
        let logits = forward(&p, &tokens, &AttentionMask::causal(3)).unwrap();
        // direct closed form
        for (pos, &tok) in tokens.iter().enumerate() {
            let x: Vec<f64> = (0..8)
                .map(|c| p.tok_emb.row(tok)[c] + p.pos_emb.row(pos)[c])
                .collect();
            let mean = x.iter().sum::<f64>() / 8.0;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            let h: Vec<f64> = x
                .iter()
                .map(|v| (v - mean) / (var + LN_EPS).sqrt())
                .collect();
            for vtok in 0..10 {
                let expect: f64 = h.iter().zip(p.head.row(vtok)).map(|(a, b)| a * b).sum();
                assert!((logits.row(pos)[vtok] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causal_prefix_is_unaffected_by_later_tokens() {
        let p = init_params(&cfg(2)).unwrap();
        let a = forward(&p, &[1, 2, 3, 4, 5], &AttentionMask::causal(5)).unwrap();
        let b = forward(&p, &[1, 2, 3, 7, 5], &AttentionMask::causal(5)).unwrap();
        assert_eq!(&a.data()[..3 * 10], &b.data()[..3 * 10]);
        assert_ne!(a.row(3), b.row(3));
    }

    #[test]
    fn zero_weights_give_zero_gradients() {
        let p = init_params(&cfg(1)).unwrap();
        let (loss, g) = backward(
            &p,
            &[1, 2, 3],
            &AttentionMask::causal(3),
            &[2, 3, 4],
            &[0.0; 3],
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.is_all_zero());
    }

    #[test]
    fn gradients_are_linear_in_weights() {
        let p = init_params(&cfg(1)).unwrap();
        let mask = AttentionMask::causal(4);
        let w = [0.0, 1.0, -0.05, 0.7];
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let (l1, g1) = backward(&p, &[1, 2, 3, 4], &mask, &[2, 3, 4, 5], &w).unwrap();
        let (l2, g2) = backward(&p, &[1, 2, 3, 4], &mask, &[2, 3, 4, 5], &w2).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*y, 2.0 * x);
            }
        }
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}
