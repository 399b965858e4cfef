//! Shared network building blocks: RMS normalization, multi-head attention,
//! feed-forward layers and dropout. All weight lookups go through the adapter
//! set so LoRA targeting works uniformly across encoder, fusion and decoder.

use crate::model::lora::AdapterSet;
use crate::model::params::ParamStore;
use crate::numerics::{Graph, Value};
use crate::rng::Rng;

pub fn init_rms_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.ones(&format!("{prefix}.g"), 1, d);
}

/// RMSNorm: `x / sqrt(mean(x^2) + eps) * gain`, row-wise.
pub fn rms_norm(store: &ParamStore, g: &Graph, prefix: &str, x: &Value) -> Value {
    let gain = store.bind(g, &format!("{prefix}.g"));
    let inv = x.mul(x).row_mean().add_scalar(1e-8).sqrt().recip();
    x.mul_col(&inv).mul_row(&gain)
}

pub fn init_attention(store: &mut ParamStore, rng: &Rng, prefix: &str, d: usize) {
    for proj in ["wq", "wk", "wv", "wo"] {
        store.xavier(rng, &format!("{prefix}.{proj}"), d, d);
    }
}

/// Multi-head scaled dot-product attention. `x_q` attends over `x_kv`; with
/// `causal` set, position n sees keys at positions <= n only.
pub fn attention(
    store: &ParamStore,
    adapters: &AdapterSet,
    g: &Graph,
    prefix: &str,
    x_q: &Value,
    x_kv: &Value,
    heads: usize,
    causal: bool,
) -> Value {
    let d = x_q.cols();
    assert_eq!(d % heads, 0, "width {d} not divisible by {heads} heads");
    let dh = d / heads;
    let q = adapters.forward_adapted(store, g, &format!("{prefix}.wq"), x_q);
    let k = adapters.forward_adapted(store, g, &format!("{prefix}.wk"), x_kv);
    let v = adapters.forward_adapted(store, g, &format!("{prefix}.wv"), x_kv);
    let mask = causal.then(|| {
        let (l, m) = (x_q.rows(), x_kv.rows());
        let mut vals = vec![0.0; l * m];
        for i in 0..l {
            for j in (i + 1)..m {
                vals[i * m + j] = -1e9;
            }
        }
        g.constant(l, m, vals)
    });
    let mut ctx = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice_cols(h * dh, dh);
        let kh = k.slice_cols(h * dh, dh);
        let vh = v.slice_cols(h * dh, dh);
        let mut scores = qh.matmul_nt(&kh).scale(1.0 / (dh as f64).sqrt());
        if let Some(m) = &mask {
            scores = scores.add(m);
        }
        ctx.push(scores.softmax_rows().matmul(&vh));
    }
    let joined = g.concat_cols(&ctx);
    adapters.forward_adapted(store, g, &format!("{prefix}.wo"), &joined)
}

pub fn init_ffn(store: &mut ParamStore, rng: &Rng, prefix: &str, d: usize, hidden: usize) {
    store.xavier(rng, &format!("{prefix}.w1"), d, hidden);
    store.zeros(&format!("{prefix}.b1"), 1, hidden);
    store.xavier(rng, &format!("{prefix}.w2"), hidden, d);
    store.zeros(&format!("{prefix}.b2"), 1, d);
}

/// Two-layer feed-forward with SiLU, adapter-aware on both matrices.
pub fn ffn(
    store: &ParamStore,
    adapters: &AdapterSet,
    g: &Graph,
    prefix: &str,
    x: &Value,
) -> Value {
    let b1 = store.bind(g, &format!("{prefix}.b1"));
    let b2 = store.bind(g, &format!("{prefix}.b2"));
    let h = adapters
        .forward_adapted(store, g, &format!("{prefix}.w1"), x)
        .add_row(&b1)
        .silu();
    adapters
        .forward_adapted(store, g, &format!("{prefix}.w2"), &h)
        .add_row(&b2)
}

/// Inverted dropout: active only in training mode, identity otherwise.
pub fn dropout(g: &Graph, x: &Value, p: f64, train: bool, rng: &mut Rng) -> Value {
    if !train || p == 0.0 {
        return x.clone();
    }
    assert!((0.0..1.0).contains(&p), "dropout rate {p}");
    let keep = 1.0 - p;
    let mask: Vec<f64> = (0..x.rows() * x.cols())
        .map(|_| if rng.f64() < p { 0.0 } else { 1.0 / keep })
        .collect();
    x.mul(&g.constant(x.rows(), x.cols(), mask))
}
