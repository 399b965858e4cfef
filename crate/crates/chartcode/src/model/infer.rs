//! Tape-free inference: a plain-matrix forward path with adapters merged into
//! effective weights, incremental decoding with key/value caching, and a
//! deterministic multiply-count used as the latency/overhead proxy.

use crate::chartlab::{ChartType, DSLProgram, Vocab};
use crate::model::moe::{self, ReweightMode};
use crate::model::params::{sinusoidal_pe, ParamStore};
use crate::model::{Model, ModelConfig};
use crate::numerics::la;
use crate::rng::Rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Greedy,
    /// Softmax sampling with a temperature.
    Sample { temperature_millis: u32 },
}

impl GenMode {
    pub fn sample(temperature: f64) -> Self {
        GenMode::Sample {
            temperature_millis: (temperature * 1000.0).round() as u32,
        }
    }
}

/// Multiply-accumulate counter: a deterministic stand-in for wall-clock cost.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlopCounter {
    pub mults: u64,
}

impl FlopCounter {
    fn matmul(&mut self, m: usize, k: usize, n: usize) {
        self.mults += (m * k * n) as u64;
    }
}

/// What one generation run did, beyond the program itself.
#[derive(Debug, Clone)]
pub struct GenStats {
    pub flops: u64,
    pub steps: usize,
    pub predicted_count: f64,
    pub complexity: f64,
    /// Per-token (expert, fusion weight) routing; empty when bypassed.
    pub selections: Vec<Vec<(usize, f64)>>,
}

/// Frozen inference snapshot of a model, with every adapter folded into its
/// base weight.
pub struct InferenceModel {
    pub cfg: ModelConfig,
    store: ParamStore,
}

fn rms_norm_row(x: &mut [f64], gain: &[f64]) {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + 1e-8).sqrt();
    for (v, g) in x.iter_mut().zip(gain) {
        *v = *v * inv * g;
    }
}

fn rms_norm_rows(x: &[f64], rows: usize, cols: usize, gain: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for r in 0..rows {
        rms_norm_row(&mut out[r * cols..(r + 1) * cols], gain);
    }
    out
}

fn softmax_inplace(row: &mut [f64]) {
    let mx = row.iter().cloned().fold(f64::MIN, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - mx).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn silu_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v /= 1.0 + (-*v).exp();
    }
}

impl InferenceModel {
    pub fn from_model(model: &Model) -> Result<Self> {
        let mut store = model.store.clone();
        let mut adapters = model.adapters.clone();
        let pending: Vec<String> = adapters
            .iter()
            .filter(|a| !a.merged)
            .map(|a| a.target.clone())
            .collect();
        for target in pending {
            adapters.merge(&mut store, &target)?;
        }
        Ok(InferenceModel {
            cfg: model.cfg,
            store,
        })
    }

    fn w(&self, name: &str) -> (&[f64], usize, usize) {
        let p = self.store.get(name);
        (&p.data, p.rows, p.cols)
    }

    fn linear(&self, prefix: &str, x: &[f64], rows: usize, fl: &mut FlopCounter) -> Vec<f64> {
        let (w, k, n) = self.w(&format!("{prefix}.w"));
        let (b, _, _) = self.w(&format!("{prefix}.b"));
        fl.matmul(rows, k, n);
        let mut out = la::matmul(x, w, rows, k, n);
        for r in 0..rows {
            la::axpy(1.0, b, &mut out[r * n..(r + 1) * n]);
        }
        out
    }

    /// Full (non-incremental) multi-head self-attention over `x`.
    fn self_attention(
        &self,
        prefix: &str,
        x: &[f64],
        rows: usize,
        fl: &mut FlopCounter,
    ) -> Vec<f64> {
        let d = self.cfg.d;
        let heads = self.cfg.heads;
        let dh = d / heads;
        let (wq, _, _) = self.w(&format!("{prefix}.wq"));
        let (wk, _, _) = self.w(&format!("{prefix}.wk"));
        let (wv, _, _) = self.w(&format!("{prefix}.wv"));
        let (wo, _, _) = self.w(&format!("{prefix}.wo"));
        fl.matmul(rows, d, d);
        fl.matmul(rows, d, d);
        fl.matmul(rows, d, d);
        let q = la::matmul(x, wq, rows, d, d);
        let k = la::matmul(x, wk, rows, d, d);
        let v = la::matmul(x, wv, rows, d, d);
        let mut joined = vec![0.0; rows * d];
        let scale = 1.0 / (dh as f64).sqrt();
        for h in 0..heads {
            for i in 0..rows {
                let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
                let mut scores = vec![0.0; rows];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                fl.matmul(1, dh, rows);
                softmax_inplace(&mut scores);
                let out = &mut joined[i * d + h * dh..i * d + (h + 1) * dh];
                for (j, &a) in scores.iter().enumerate() {
                    let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
                    la::axpy(a, vj, out);
                }
                fl.matmul(1, rows, dh);
            }
        }
        fl.matmul(rows, d, d);
        la::matmul(&joined, wo, rows, d, d)
    }

    fn ffn(&self, prefix: &str, x: &[f64], rows: usize, fl: &mut FlopCounter) -> Vec<f64> {
        let (w1, d, hdim) = self.w(&format!("{prefix}.w1"));
        let (b1, _, _) = self.w(&format!("{prefix}.b1"));
        let (w2, _, _) = self.w(&format!("{prefix}.w2"));
        let (b2, _, _) = self.w(&format!("{prefix}.b2"));
        fl.matmul(rows, d, hdim);
        let mut h = la::matmul(x, w1, rows, d, hdim);
        for r in 0..rows {
            la::axpy(1.0, b1, &mut h[r * hdim..(r + 1) * hdim]);
        }
        silu_inplace(&mut h);
        fl.matmul(rows, hdim, d);
        let mut out = la::matmul(&h, w2, rows, hdim, d);
        for r in 0..rows {
            la::axpy(1.0, b2, &mut out[r * d..(r + 1) * d]);
        }
        out
    }

    fn norm(&self, prefix: &str, x: &[f64], rows: usize) -> Vec<f64> {
        let (g, _, _) = self.w(&format!("{prefix}.g"));
        rms_norm_rows(x, rows, self.cfg.d, g)
    }

    /// Encoder + fusion block. With `bypass_routing` the MoE layer is skipped
    /// entirely (residual only), which isolates the routing cost.
    pub fn encode_fused(
        &self,
        image: &[f64],
        chart_type: ChartType,
        bypass_routing: bool,
        rng: &mut Rng,
        fl: &mut FlopCounter,
    ) -> Result<(Vec<f64>, GenStats)> {
        let cfg = &self.cfg;
        let m = cfg.tokens_m();
        let d = cfg.d;
        let patches = super::encoder::patchify(cfg, image);
        let mut x = self.linear("enc.patch", &patches, m, fl);
        let pe = sinusoidal_pe(m, d);
        la::axpy(1.0, &pe, &mut x);
        for b in 0..cfg.enc_blocks {
            let normed = self.norm(&format!("enc.b{b}.norm1"), &x, m);
            let attn = self.self_attention(&format!("enc.b{b}.attn"), &normed, m, fl);
            la::axpy(1.0, &attn, &mut x);
            let normed = self.norm(&format!("enc.b{b}.norm2"), &x, m);
            let f = self.ffn(&format!("enc.b{b}.ffn"), &normed, m, fl);
            la::axpy(1.0, &f, &mut x);
        }
        let tokens = self.norm("enc.norm", &x, m);
        // element count head on mean-pooled tokens
        let mut pool = vec![0.0; d];
        for r in 0..m {
            la::axpy(1.0 / m as f64, &tokens[r * d..(r + 1) * d], &mut pool);
        }
        let pre = self.linear("enc.count", &pool, 1, fl)[0];
        let predicted_count = if pre > 30.0 { pre } else { (1.0 + pre.exp()).ln() };
        let alpha = self.w("moe.cmplx.alpha").0[0];
        let beta = self.w("moe.cmplx.beta").0[0];
        let psi = self.w("moe.cmplx.psi").0[chart_type.index()];
        let complexity = alpha * predicted_count + beta * psi;
        // fusion block
        let normed = self.norm("fuse.norm1", &tokens, m);
        let attn = self.self_attention("fuse.attn", &normed, m, fl);
        let mut h = tokens;
        la::axpy(1.0, &attn, &mut h);
        let mut stats = GenStats {
            flops: 0,
            steps: 0,
            predicted_count,
            complexity,
            selections: vec![Vec::new(); m],
        };
        if bypass_routing {
            return Ok((h, stats));
        }
        let moe_in = self.norm("fuse.norm2", &h, m);
        // gate (no noise at inference)
        let (gw, _, n) = self.w("moe.gate.w");
        let (gb, _, _) = self.w("moe.gate.b");
        fl.matmul(m, d, n);
        let mut p = la::matmul(&moe_in, gw, m, d, n);
        for r in 0..m {
            la::axpy(1.0, gb, &mut p[r * n..(r + 1) * n]);
            softmax_inplace(&mut p[r * n..(r + 1) * n]);
        }
        // reweight
        let reweighted = match cfg.reweight {
            ReweightMode::Literal => p.clone(),
            ReweightMode::Sharpen => {
                let exponent = 1.0 + complexity / cfg.temperature;
                let mut out = p.clone();
                for r in 0..m {
                    let row = &mut out[r * n..(r + 1) * n];
                    for v in row.iter_mut() {
                        *v = (*v + 1e-300).ln() * exponent;
                    }
                    softmax_inplace(row);
                }
                out
            }
        };
        let selections = moe::dispatch(
            &reweighted,
            m,
            n,
            cfg.dispatch,
            cfg.top_k,
            cfg.capacity,
            rng,
        )?;
        // fuse: residual + weighted expert outputs
        for (t, sel) in selections.iter().enumerate() {
            if sel.is_empty() {
                continue;
            }
            let denom: f64 = sel.iter().map(|&e| reweighted[t * n + e]).sum();
            let xin = &moe_in[t * d..(t + 1) * d];
            for &e in sel {
                let weight = reweighted[t * n + e] / denom;
                let y = self.ffn(&format!("moe.expert{e}.ffn"), xin, 1, fl);
                la::axpy(weight, &y, &mut h[t * d..(t + 1) * d]);
                stats.selections[t].push((e, weight));
            }
        }
        Ok((h, stats))
    }

    /// Autoregressive generation with per-block KV caching. Stops at EOS or
    /// `max_len` emitted tokens; the program excludes the EOS marker.
    pub fn generate(
        &self,
        image: &[f64],
        chart_type: ChartType,
        mode: GenMode,
        max_len: usize,
        bypass_routing: bool,
        rng: &mut Rng,
    ) -> Result<(DSLProgram, GenStats)> {
        assert!(max_len >= 1, "max_len must be >= 1");
        let mut fl = FlopCounter::default();
        let (fused, mut stats) =
            self.encode_fused(image, chart_type, bypass_routing, rng, &mut fl)?;
        let mut dec = IncrementalDecoder::new(self, &fused);
        let mut tokens: Vec<u16> = Vec::new();
        let mut input = Vocab::BOS;
        for step in 0..max_len {
            let logits = dec.step(input, step, &mut fl);
            let next = match mode {
                GenMode::Greedy => argmax(&logits) as u16,
                GenMode::Sample { temperature_millis } => {
                    let temp = (temperature_millis as f64 / 1000.0).max(1e-6);
                    let mut probs: Vec<f64> = logits.iter().map(|&l| l / temp).collect();
                    softmax_inplace(&mut probs);
                    rng.categorical(&probs) as u16
                }
            };
            stats.steps = step + 1;
            if next == Vocab::EOS {
                break;
            }
            tokens.push(next);
            input = next;
        }
        stats.flops = fl.mults;
        Ok((DSLProgram { tokens }, stats))
    }

    /// Teacher-forced logits through the incremental path (for the
    /// batched/incremental equivalence check and the eval loss).
    pub fn forced_logits(
        &self,
        image: &[f64],
        chart_type: ChartType,
        target: &[u16],
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        let mut fl = FlopCounter::default();
        let (fused, _) = self.encode_fused(image, chart_type, false, rng, &mut fl)?;
        let mut dec = IncrementalDecoder::new(self, &fused);
        let mut out = Vec::with_capacity((target.len() + 1) * self.cfg.vocab);
        let mut input = Vocab::BOS;
        for step in 0..=target.len() {
            out.extend(dec.step(input, step, &mut fl));
            if step < target.len() {
                input = target[step];
            }
        }
        Ok(out)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

struct BlockCache {
    k: Vec<f64>,
    v: Vec<f64>,
    /// Per-visual-token score term (M), fixed for the whole generation.
    fp: Vec<f64>,
}

/// Step-by-step decoder sharing weights with the snapshot.
struct IncrementalDecoder<'a> {
    model: &'a InferenceModel,
    fused: &'a [f64],
    blocks: Vec<BlockCache>,
    pe: Vec<f64>,
}

impl<'a> IncrementalDecoder<'a> {
    fn new(model: &'a InferenceModel, fused: &'a [f64]) -> Self {
        let cfg = &model.cfg;
        let m = cfg.tokens_m();
        let pe_vis = sinusoidal_pe(m, cfg.d);
        let blocks = (0..cfg.dec_blocks)
            .map(|b| {
                let (wbot, _, _) = model.w(&format!("dec.b{b}.cross.wbot"));
                let mut fp = vec![0.0; m];
                for t in 0..m {
                    fp[t] = (0..cfg.d)
                        .map(|i| (fused[t * cfg.d + i] + pe_vis[t * cfg.d + i]) * wbot[i])
                        .sum();
                }
                BlockCache {
                    k: Vec::new(),
                    v: Vec::new(),
                    fp,
                }
            })
            .collect();
        IncrementalDecoder {
            model,
            fused,
            blocks,
            pe: sinusoidal_pe(cfg.max_len, cfg.d),
        }
    }

    fn step(&mut self, input: u16, pos: usize, fl: &mut FlopCounter) -> Vec<f64> {
        let cfg = &self.model.cfg;
        let d = cfg.d;
        let heads = cfg.heads;
        let dh = d / heads;
        let m = cfg.tokens_m();
        let (embed, _, _) = self.model.w("dec.embed");
        let mut x: Vec<f64> = embed[input as usize * d..(input as usize + 1) * d].to_vec();
        la::axpy(1.0, &self.pe[pos * d..(pos + 1) * d], &mut x);
        for b in 0..cfg.dec_blocks {
            // causal self-attention over the cache
            let normed = {
                let (g, _, _) = self.model.w(&format!("dec.b{b}.norm1.g"));
                let mut n = x.clone();
                rms_norm_row(&mut n, g);
                n
            };
            let (wq, _, _) = self.model.w(&format!("dec.b{b}.self.wq"));
            let (wk, _, _) = self.model.w(&format!("dec.b{b}.self.wk"));
            let (wv, _, _) = self.model.w(&format!("dec.b{b}.self.wv"));
            let (wo, _, _) = self.model.w(&format!("dec.b{b}.self.wo"));
            fl.matmul(3, d, d);
            let q = la::matmul(&normed, wq, 1, d, d);
            let k = la::matmul(&normed, wk, 1, d, d);
            let v = la::matmul(&normed, wv, 1, d, d);
            let cache = &mut self.blocks[b];
            cache.k.extend_from_slice(&k);
            cache.v.extend_from_slice(&v);
            let steps = cache.k.len() / d;
            let mut joined = vec![0.0; d];
            let scale = 1.0 / (dh as f64).sqrt();
            for h in 0..heads {
                let qh = &q[h * dh..(h + 1) * dh];
                let mut scores = vec![0.0; steps];
                for (j, s) in scores.iter_mut().enumerate() {
                    let kj = &cache.k[j * d + h * dh..j * d + (h + 1) * dh];
                    *s = qh.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                fl.matmul(1, dh, steps);
                softmax_inplace(&mut scores);
                let out = &mut joined[h * dh..(h + 1) * dh];
                for (j, &a) in scores.iter().enumerate() {
                    la::axpy(a, &cache.v[j * d + h * dh..j * d + (h + 1) * dh], out);
                }
                fl.matmul(1, steps, dh);
            }
            fl.matmul(1, d, d);
            let attn = la::matmul(&joined, wo, 1, d, d);
            la::axpy(1.0, &attn, &mut x);
            // cross attention
            let normed = {
                let (g, _, _) = self.model.w(&format!("dec.b{b}.norm2.g"));
                let mut n = x.clone();
                rms_norm_row(&mut n, g);
                n
            };
            let (wtop, _, _) = self.model.w(&format!("dec.b{b}.cross.wtop"));
            let (bias, _, _) = self.model.w(&format!("dec.b{b}.cross.bias"));
            let sp: f64 = (0..d)
                .map(|i| (normed[i] + self.pe[pos * d + i]) * wtop[i])
                .sum::<f64>()
                + bias[0];
            let mut weights: Vec<f64> = self.blocks[b].fp.iter().map(|f| sp + f).collect();
            softmax_inplace(&mut weights);
            let mut ctx = vec![0.0; d];
            for (t, &a) in weights.iter().enumerate() {
                la::axpy(a, &self.fused[t * d..(t + 1) * d], &mut ctx);
            }
            fl.matmul(1, m, d);
            // state-conditioned gate over the shared context
            let (gate, _, _) = self.model.w(&format!("dec.b{b}.cross.gate"));
            fl.matmul(1, d, d);
            let gvec = la::matmul(&normed, gate, 1, d, d);
            for (c, gv) in ctx.iter_mut().zip(&gvec) {
                *c += *c * gv;
            }
            let (proj, _, _) = self.model.w(&format!("dec.b{b}.cross.proj"));
            fl.matmul(1, d, d);
            let projected = la::matmul(&ctx, proj, 1, d, d);
            la::axpy(1.0, &projected, &mut x);
            // feed-forward
            let normed = {
                let (g, _, _) = self.model.w(&format!("dec.b{b}.norm3.g"));
                let mut n = x.clone();
                rms_norm_row(&mut n, g);
                n
            };
            let f = self.model.ffn(&format!("dec.b{b}.ffn"), &normed, 1, fl);
            la::axpy(1.0, &f, &mut x);
        }
        let (g, _, _) = self.model.w("dec.norm.g");
        rms_norm_row(&mut x, g);
        self.model.linear("dec.out", &x, 1, fl)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::{rasterize_spec, sample_spec, TypeMix};
    use crate::model::{LoraConfig, Model, TrainMode};
    use crate::numerics::Graph;

    fn test_model() -> Model {
        let cfg = ModelConfig {
            img: 16,
            patch: 8,
            d: 16,
            heads: 2,
            experts: 4,
            capacity: 8,
            max_len: 24,
            ..ModelConfig::default()
        }; // 4 visual tokens
        Model::new(cfg, TrainMode::MoeLora, LoraConfig { rank: 4, ..LoraConfig::default() }, 21).unwrap()
    }

    fn test_image(seed: u64) -> (Vec<f64>, ChartType) {
        let spec = sample_spec(&mut Rng::from_seed(seed), &TypeMix::default_mix());
        let img = rasterize_spec(&spec).unwrap();
        // downsample 64x64 -> 16x16 by striding (content irrelevant here)
        let mut small = vec![0.0; 3 * 16 * 16];
        let big = img.to_f64();
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..3 {
                    small[3 * (y * 16 + x) + c] = big[3 * (y * 4 * 64 + x * 4) + c];
                }
            }
        }
        (small, spec.chart_type)
    }

    #[test]
    fn incremental_matches_teacher_forced() {
        let model = test_model();
        let inf = InferenceModel::from_model(&model).unwrap();
        let (img, ctype) = test_image(5);
        let target = [3u16, 6, 5, 11, Vocab::num(9), 12, 4];
        let g = Graph::eval();
        let mut rng = Rng::from_seed(0);
        let forced = model
            .forward_sample(&g, &img, ctype, &target, false, &mut rng)
            .unwrap()
            .logits
            .data()
            .to_vec();
        let mut rng = Rng::from_seed(0);
        let incremental = inf.forced_logits(&img, ctype, &target, &mut rng).unwrap();
        assert_eq!(forced.len(), incremental.len());
        let worst = forced
            .iter()
            .zip(&incremental)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max logit deviation {worst}");
    }

    #[test]
    fn lora_adapters_participate_in_inference() {
        let mut model = test_model();
        // non-trivial B so the adapters matter
        let names: Vec<String> = model
            .store
            .names()
            .filter(|n| n.starts_with("lora.") && n.ends_with(".b"))
            .map(String::from)
            .collect();
        let mut r = Rng::from_seed(1);
        for n in names {
            for v in model.store.get_mut(&n).data.iter_mut() {
                *v = r.uniform(-0.2, 0.2);
            }
        }
        let inf = InferenceModel::from_model(&model).unwrap();
        let (img, ctype) = test_image(6);
        let target = [3u16, 7, 4];
        let g = Graph::eval();
        let forced = model
            .forward_sample(&g, &img, ctype, &target, false, &mut Rng::from_seed(0))
            .unwrap()
            .logits
            .data()
            .to_vec();
        let incremental = inf
            .forced_logits(&img, ctype, &target, &mut Rng::from_seed(0))
            .unwrap();
        let worst = forced
            .iter()
            .zip(&incremental)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max logit deviation {worst}");
    }

    #[test]
    fn greedy_generation_is_deterministic_and_bounded() {
        let model = test_model();
        let inf = InferenceModel::from_model(&model).unwrap();
        let (img, ctype) = test_image(7);
        let run = || {
            let mut rng = Rng::from_seed(3);
            inf.generate(&img, ctype, GenMode::Greedy, 10, false, &mut rng)
                .unwrap()
        };
        let (a, stats_a) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(a.tokens.len() <= 10);
        assert!(a.tokens.iter().all(|&t| (t as usize) < Vocab::SIZE));
        assert!(stats_a.flops > 0);
        // max_len 1 emits exactly one step
        let mut rng = Rng::from_seed(3);
        let (one, stats) = inf.generate(&img, ctype, GenMode::Greedy, 1, false, &mut rng).unwrap();
        assert_eq!(stats.steps, 1);
        assert!(one.tokens.len() <= 1);
    }

    #[test]
    fn routing_bypass_reduces_flops() {
        let model = test_model();
        let inf = InferenceModel::from_model(&model).unwrap();
        let (img, ctype) = test_image(8);
        let with = inf
            .generate(&img, ctype, GenMode::Greedy, 8, false, &mut Rng::from_seed(4))
            .unwrap()
            .1;
        let without = inf
            .generate(&img, ctype, GenMode::Greedy, 8, true, &mut Rng::from_seed(4))
            .unwrap()
            .1;
        assert!(with.flops > without.flops);
        assert!(without.selections.iter().all(|s| s.is_empty()));
        assert!(with.selections.iter().any(|s| !s.is_empty()));
    }

    #[test]
    fn flop_count_is_deterministic() {
        let model = test_model();
        let inf = InferenceModel::from_model(&model).unwrap();
        let (img, ctype) = test_image(9);
        let a = inf
            .generate(&img, ctype, GenMode::Greedy, 8, false, &mut Rng::from_seed(5))
            .unwrap()
            .1
            .flops;
        let b = inf
            .generate(&img, ctype, GenMode::Greedy, 8, false, &mut Rng::from_seed(5))
            .unwrap()
            .1
            .flops;
        assert_eq!(a, b);
    }
}
