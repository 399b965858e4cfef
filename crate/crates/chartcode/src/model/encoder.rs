//! Visual front end: patch embedding + a small pre-norm self-attention stack
//! producing the visual token matrix, plus the element-count head feeding the
//! routing complexity metric.

use crate::chartlab::ChartType;
use crate::model::lora::AdapterSet;
use crate::model::nn;
use crate::model::params::{self, ParamStore};
use crate::model::ModelConfig;
use crate::numerics::{Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

/// Encoder output plus the per-chart metadata the router consumes.
pub struct VisualTokens {
    /// M×d token matrix.
    pub tokens: Value,
    pub chart_type: ChartType,
}

pub fn init_encoder(store: &mut ParamStore, rng: &Rng, cfg: &ModelConfig) {
    params::init_linear(store, rng, "enc.patch", cfg.patch_dim(), cfg.d);
    for b in 0..cfg.enc_blocks {
        nn::init_rms_norm(store, &format!("enc.b{b}.norm1"), cfg.d);
        nn::init_attention(store, rng, &format!("enc.b{b}.attn"), cfg.d);
        nn::init_rms_norm(store, &format!("enc.b{b}.norm2"), cfg.d);
        nn::init_ffn(store, rng, &format!("enc.b{b}.ffn"), cfg.d, 2 * cfg.d);
    }
    nn::init_rms_norm(store, "enc.norm", cfg.d);
    params::init_linear(store, rng, "enc.count", cfg.d, 1);
}

/// Rearrange a row-major RGB image into an M×patch_dim matrix (one row per
/// patch, raster order within the patch).
pub(crate) fn patchify(cfg: &ModelConfig, image: &[f64]) -> Vec<f64> {
    let side = cfg.img / cfg.patch;
    let mut out = vec![0.0; cfg.tokens_m() * cfg.patch_dim()];
    for py in 0..side {
        for px in 0..side {
            let patch = py * side + px;
            let base = patch * cfg.patch_dim();
            let mut w = base;
            for dy in 0..cfg.patch {
                for dx in 0..cfg.patch {
                    let y = py * cfg.patch + dy;
                    let x = px * cfg.patch + dx;
                    let src = 3 * (y * cfg.img + x);
                    out[w..w + 3].copy_from_slice(&image[src..src + 3]);
                    w += 3;
                }
            }
        }
    }
    out
}

/// Encode a raster into visual tokens: patch embed, add sinusoidal positions,
/// run the self-attention blocks.
pub fn encode(
    store: &ParamStore,
    adapters: &AdapterSet,
    g: &Graph,
    cfg: &ModelConfig,
    image: &[f64],
    chart_type: ChartType,
    train: bool,
    rng: &mut Rng,
) -> Result<VisualTokens> {
    if image.len() != 3 * cfg.img * cfg.img {
        return Err(Error::contract(format!(
            "image buffer {} does not match {}x{} RGB",
            image.len(),
            cfg.img,
            cfg.img
        )));
    }
    if cfg.img % cfg.patch != 0 {
        return Err(Error::contract(format!(
            "image side {} not divisible by patch {}",
            cfg.img, cfg.patch
        )));
    }
    let m = cfg.tokens_m();
    let patches = g.constant(m, cfg.patch_dim(), patchify(cfg, image));
    let pe = g.constant(m, cfg.d, params::sinusoidal_pe(m, cfg.d));
    let mut x = params::linear(store, g, "enc.patch", &patches).add(&pe);
    for b in 0..cfg.enc_blocks {
        let normed = nn::rms_norm(store, g, &format!("enc.b{b}.norm1"), &x);
        let attn = nn::attention(
            store,
            adapters,
            g,
            &format!("enc.b{b}.attn"),
            &normed,
            &normed,
            cfg.heads,
            false,
        );
        x = x.add(&nn::dropout(g, &attn, cfg.dropout, train, rng));
        let normed = nn::rms_norm(store, g, &format!("enc.b{b}.norm2"), &x);
        let f = nn::ffn(store, adapters, g, &format!("enc.b{b}.ffn"), &normed);
        x = x.add(&nn::dropout(g, &f, cfg.dropout, train, rng));
    }
    let tokens = nn::rms_norm(store, g, "enc.norm", &x);
    Ok(VisualTokens { tokens, chart_type })
}

/// Softplus linear head on mean-pooled tokens; always non-negative.
pub fn predict_element_count(
    store: &ParamStore,
    g: &Graph,
    cfg: &ModelConfig,
    tokens: &Value,
) -> Value {
    let m = cfg.tokens_m();
    let pool = g
        .constant(1, m, vec![1.0 / m as f64; m])
        .matmul(tokens);
    params::linear(store, g, "enc.count", &pool).softplus()
}
