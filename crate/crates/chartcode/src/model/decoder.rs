//! Autoregressive DSL-token decoder: causal self-attention blocks with
//! cross-modal attention over the visual tokens (concatenation-style learned
//! score, single head) and the token-level cross-entropy loss.

use crate::chartlab::Vocab;
use crate::model::lora::AdapterSet;
use crate::model::nn;
use crate::model::params::{self, ParamStore};
use crate::model::ModelConfig;
use crate::numerics::{Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

pub fn init_decoder(store: &mut ParamStore, rng: &Rng, cfg: &ModelConfig) {
    store.xavier(rng, "dec.embed", cfg.vocab, cfg.d);
    for b in 0..cfg.dec_blocks {
        nn::init_rms_norm(store, &format!("dec.b{b}.norm1"), cfg.d);
        nn::init_attention(store, rng, &format!("dec.b{b}.self"), cfg.d);
        nn::init_rms_norm(store, &format!("dec.b{b}.norm2"), cfg.d);
        store.xavier(rng, &format!("dec.b{b}.cross.wtop"), cfg.d, 1);
        store.xavier(rng, &format!("dec.b{b}.cross.wbot"), cfg.d, 1);
        store.zeros(&format!("dec.b{b}.cross.bias"), 1, 1);
        store.zeros(&format!("dec.b{b}.cross.gate"), cfg.d, cfg.d);
        store.xavier(rng, &format!("dec.b{b}.cross.proj"), cfg.d, cfg.d);
        nn::init_rms_norm(store, &format!("dec.b{b}.norm3"), cfg.d);
        nn::init_ffn(store, rng, &format!("dec.b{b}.ffn"), cfg.d, 2 * cfg.d);
    }
    nn::init_rms_norm(store, "dec.norm", cfg.d);
    params::init_linear(store, rng, "dec.out", cfg.d, cfg.vocab);
    init_ordinal_numeric_tokens(store, cfg);
}

/// Numeric-literal tokens are ordinal (bin k of a quantized value), but a
/// generic embedding init treats them as unrelated symbols, which starves the
/// cross-entropy loss of any notion that bin 30 is closer to 31 than to 5.
/// Seed their embedding rows and output-head columns with a sinusoidal code
/// over the bin index so neighboring bins start out similar: the output
/// logits over bins then behave like a smooth kernel around a learned
/// pointer, and the value head can regress before it classifies. Only
/// applies when the configured vocabulary actually contains the numeric
/// range (miniature test models may not). Both tensors remain trainable.
fn init_ordinal_numeric_tokens(store: &mut ParamStore, cfg: &ModelConfig) {
    let lo = Vocab::NUM_BASE as usize;
    let hi = lo + Vocab::NUM_COUNT as usize;
    if cfg.vocab < hi {
        return;
    }
    let code = params::sinusoidal_pe(Vocab::NUM_COUNT as usize, cfg.d);
    let d = cfg.d;
    {
        let embed = store.get_mut("dec.embed");
        for k in 0..Vocab::NUM_COUNT as usize {
            for j in 0..d {
                embed.data[(lo + k) * d + j] = 0.25 * code[k * d + j];
            }
        }
    }
    let out = store.get_mut("dec.out.w");
    let vocab = cfg.vocab;
    for k in 0..Vocab::NUM_COUNT as usize {
        for j in 0..d {
            out.data[j * vocab + lo + k] = 0.2 * code[k * d + j];
        }
    }
}

/// Concatenation-score cross attention: per (step n, visual token m) the
/// score is a linear map over the positionally-encoded pair, which splits
/// into a per-step term plus a per-visual-token term. Because the step term
/// is constant across visual tokens it cancels in the row softmax, so the
/// attention weights — and the raw context — are shared by all steps. Each
/// step therefore reads the context through a state-conditioned gate
/// (`ctx + (h·W_g) ⊙ ctx`, gate zero-initialized) before the output
/// projection, which is what lets different decode positions extract
/// different features from the shared visual summary. Returns the projected
/// context and the attention weights.
pub fn cross_attention(
    store: &ParamStore,
    adapters: &AdapterSet,
    g: &Graph,
    prefix: &str,
    token_states: &Value,
    visual: &Value,
) -> (Value, Value) {
    let d = token_states.cols();
    let pe_seq = g.constant(
        token_states.rows(),
        d,
        params::sinusoidal_pe(token_states.rows(), d),
    );
    let pe_vis = g.constant(visual.rows(), d, params::sinusoidal_pe(visual.rows(), d));
    let wtop = store.bind(g, &format!("{prefix}.wtop"));
    let wbot = store.bind(g, &format!("{prefix}.wbot"));
    let bias = store.bind(g, &format!("{prefix}.bias"));
    let sp = token_states.add(&pe_seq).matmul(&wtop).add_row(&bias);
    let fp = visual.add(&pe_vis).matmul(&wbot);
    let weights = sp.outer_add(&fp).softmax_rows();
    let context = weights.matmul(visual);
    let gate = store.bind(g, &format!("{prefix}.gate"));
    let modulated = context.add(&token_states.matmul(&gate).mul(&context));
    let projected = adapters.forward_adapted(store, g, &format!("{prefix}.proj"), &modulated);
    (projected, weights)
}

fn check_tokens(cfg: &ModelConfig, tokens: &[u16]) -> Result<()> {
    if tokens.len() + 1 > cfg.max_len {
        return Err(Error::contract(format!(
            "target length {} exceeds max_len {}",
            tokens.len(),
            cfg.max_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab) {
        return Err(Error::contract(format!("token id {bad} outside vocabulary")));
    }
    Ok(())
}

/// Run the decoder over `[BOS] ++ target` with causal masking; row n of the
/// returned logits predicts `target[n]` (and the final row predicts EOS).
#[allow(clippy::too_many_arguments)]
pub fn forward_teacher_forced(
    store: &ParamStore,
    adapters: &AdapterSet,
    g: &Graph,
    cfg: &ModelConfig,
    visual: &Value,
    target: &[u16],
    train: bool,
    rng: &mut Rng,
) -> Result<Value> {
    check_tokens(cfg, target)?;
    let mut input = vec![Vocab::BOS as usize];
    input.extend(target.iter().map(|&t| t as usize));
    let l = input.len();
    let embed = store.bind(g, "dec.embed");
    let pe = g.constant(l, cfg.d, params::sinusoidal_pe(l, cfg.d));
    let mut x = embed.gather_rows(&input).add(&pe);
    for b in 0..cfg.dec_blocks {
        let normed = nn::rms_norm(store, g, &format!("dec.b{b}.norm1"), &x);
        let attn = nn::attention(
            store,
            adapters,
            g,
            &format!("dec.b{b}.self"),
            &normed,
            &normed,
            cfg.heads,
            true,
        );
        x = x.add(&nn::dropout(g, &attn, cfg.dropout, train, rng));
        let normed = nn::rms_norm(store, g, &format!("dec.b{b}.norm2"), &x);
        let (ctx, _) = cross_attention(store, adapters, g, &format!("dec.b{b}.cross"), &normed, visual);
        x = x.add(&nn::dropout(g, &ctx, cfg.dropout, train, rng));
        let normed = nn::rms_norm(store, g, &format!("dec.b{b}.norm3"), &x);
        let f = nn::ffn(store, adapters, g, &format!("dec.b{b}.ffn"), &normed);
        x = x.add(&nn::dropout(g, &f, cfg.dropout, train, rng));
    }
    let x = nn::rms_norm(store, g, "dec.norm", &x);
    Ok(params::linear(store, g, "dec.out", &x))
}

/// Mean token-level cross-entropy; row n of `logits` is scored against
/// `target[n]`, with the final row scored against EOS.
pub fn syntax_loss(logits: &Value, target: &[u16]) -> Result<Value> {
    if logits.rows() != target.len() + 1 {
        return Err(Error::contract(format!(
            "logit rows {} vs target length {} + EOS",
            logits.rows(),
            target.len()
        )));
    }
    let mut expected: Vec<usize> = target.iter().map(|&t| t as usize).collect();
    expected.push(Vocab::EOS as usize);
    if let Some(&bad) = expected.iter().find(|&&t| t >= logits.cols()) {
        return Err(Error::contract(format!("token id {bad} outside vocabulary")));
    }
    let picked = logits.log_softmax_rows().select_per_row(&expected);
    Ok(picked.mean().scale(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d: 8,
            heads: 2,
            vocab: 12,
            max_len: 16,
            dec_blocks: 2,
            ..ModelConfig::default()
        }
    }

    fn setup(cfg: &ModelConfig) -> ParamStore {
        let mut store = ParamStore::new();
        init_decoder(&mut store, &Rng::from_seed(110), cfg);
        store
    }

    fn run(cfg: &ModelConfig, store: &ParamStore, visual: &[f64], target: &[u16]) -> Vec<f64> {
        let g = Graph::eval();
        let v = g.constant(4, cfg.d, visual.to_vec());
        let mut rng = Rng::from_seed(0);
        forward_teacher_forced(store, &AdapterSet::none(), &g, cfg, &v, target, false, &mut rng)
            .unwrap()
            .data()
            .to_vec()
    }

    fn rand_visual(cfg: &ModelConfig) -> Vec<f64> {
        let mut r = Rng::from_seed(111);
        (0..4 * cfg.d).map(|_| r.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn logits_shape() {
        let cfg = tiny_cfg();
        let store = setup(&cfg);
        let out = run(&cfg, &store, &rand_visual(&cfg), &[3, 6, 4]);
        assert_eq!(out.len(), 4 * cfg.vocab);
    }

    #[test]
    fn causality_in_targets() {
        let cfg = tiny_cfg();
        let store = setup(&cfg);
        let vis = rand_visual(&cfg);
        let a = run(&cfg, &store, &vis, &[3, 6, 4, 5]);
        let b = run(&cfg, &store, &vis, &[3, 6, 9, 5]); // changed position 2
        let v = cfg.vocab;
        // rows 0..=2 consume inputs [BOS,3,6] in both cases → identical
        assert_eq!(a[..3 * v], b[..3 * v]);
        assert_ne!(a[3 * v..], b[3 * v..]);
    }

    #[test]
    fn visual_perturbation_reaches_every_step() {
        let cfg = tiny_cfg();
        let store = setup(&cfg);
        let vis = rand_visual(&cfg);
        let mut vis2 = vis.clone();
        vis2[5] += 1.0;
        let a = run(&cfg, &store, &vis, &[3, 6, 4]);
        let b = run(&cfg, &store, &vis2, &[3, 6, 4]);
        let v = cfg.vocab;
        for step in 0..4 {
            assert_ne!(a[step * v..(step + 1) * v], b[step * v..(step + 1) * v], "step {step}");
        }
    }

    #[test]
    fn attention_rows_normalized_and_singleton_passthrough() {
        let cfg = tiny_cfg();
        let store = setup(&cfg);
        let g = Graph::eval();
        let mut r = Rng::from_seed(112);
        let vis = g.constant(5, cfg.d, (0..5 * cfg.d).map(|_| r.uniform(-1.0, 1.0)).collect());
        let states = g.constant(3, cfg.d, (0..3 * cfg.d).map(|_| r.uniform(-1.0, 1.0)).collect());
        let (_, w) = cross_attention(&store, &AdapterSet::none(), &g, "dec.b0.cross", &states, &vis);
        let d = w.data();
        for row in 0..3 {
            let s: f64 = d[row * 5..(row + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        // single visual token → weight 1, context = that token (pre-projection)
        let vis1 = g.constant(1, cfg.d, (0..cfg.d).map(|_| r.uniform(-1.0, 1.0)).collect());
        let (_, w1) = cross_attention(&store, &AdapterSet::none(), &g, "dec.b0.cross", &states, &vis1);
        for &v in w1.data().iter() {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn unknown_token_rejected() {
        let cfg = tiny_cfg();
        let store = setup(&cfg);
        let g = Graph::eval();
        let v = g.constant(4, cfg.d, rand_visual(&cfg));
        let mut rng = Rng::from_seed(0);
        assert!(forward_teacher_forced(
            &store,
            &AdapterSet::none(),
            &g,
            &cfg,
            &v,
            &[99],
            false,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn syntax_loss_closed_forms() {
        let g = Graph::eval();
        let v = 8usize;
        // uniform logits → ln V
        let logits = g.constant(3, v, vec![0.0; 3 * v]);
        let loss = syntax_loss(&logits, &[5, 1]).unwrap().item();
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
        // near-one-hot correct → near 0
        let mut vals = vec![-50.0; 3 * v];
        vals[5] = 50.0;
        vals[v + 1] = 50.0;
        vals[2 * v + Vocab::EOS as usize] = 50.0;
        let logits = g.constant(3, v, vals);
        assert!(syntax_loss(&logits, &[5, 1]).unwrap().item() < 1e-9);
    }

    #[test]
    fn syntax_loss_matches_direct_recomputation() {
        let mut r = Rng::from_seed(113);
        let v = 6usize;
        let vals: Vec<f64> = (0..4 * v).map(|_| r.uniform(-2.0, 2.0)).collect();
        let target = [3u16, 0, 5];
        let g = Graph::eval();
        let logits = g.constant(4, v, vals.clone());
        let got = syntax_loss(&logits, &target).unwrap().item();
        // independent scalar recomputation
        let mut expected_ids: Vec<usize> = target.iter().map(|&t| t as usize).collect();
        expected_ids.push(Vocab::EOS as usize);
        let mut total = 0.0;
        for (row, &id) in expected_ids.iter().enumerate() {
            let r = &vals[row * v..(row + 1) * v];
            let mx = r.iter().cloned().fold(f64::MIN, f64::max);
            let lse = mx + r.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            total -= r[id] - lse;
        }
        assert!((got - total / 4.0).abs() < 1e-12);
    }
}
