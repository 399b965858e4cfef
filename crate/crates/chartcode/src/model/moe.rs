//! Complexity-aware mixture-of-experts layer: noisy gating, complexity
//! reweighting, capacity-limited dispatch, weighted expert fusion, and the
//! routing losses plus utilization accounting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::chartlab::ChartType;
use crate::model::params::ParamStore;
use crate::model::ModelConfig;
use crate::numerics::{Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

/// Initialization of the learnable per-type difficulty table
/// (bar, line, scatter, pie, complex).
pub const PSI_INIT: [f64; 5] = [3.2, 4.1, 4.5, 2.7, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightMode {
    /// The routing formula exactly as published; the complexity factor is
    /// token-constant and cancels, so this is the identity on distributions.
    Literal,
    /// Complexity-dependent sharpening: `softmax(log p * (1 + c/T))`.
    Sharpen,
}

impl ReweightMode {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ReweightMode::Literal),
            "sharpen" => Ok(ReweightMode::Sharpen),
            other => Err(Error::Config(format!("unknown reweight mode {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ReweightMode::Literal => "literal",
            ReweightMode::Sharpen => "sharpen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    /// k highest reweighted probabilities; ties go to the lower expert id.
    TopK,
    /// k distinct experts sampled without replacement proportionally to p'.
    Probabilistic,
}

impl DispatchMode {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(DispatchMode::TopK),
            "prob" | "probabilistic" => Ok(DispatchMode::Probabilistic),
            other => Err(Error::Config(format!("unknown routing strategy {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            DispatchMode::TopK => "topk",
            DispatchMode::Probabilistic => "prob",
        }
    }
}

/// Everything the router decided for one chart's tokens.
pub struct RoutingDecision {
    pub raw_scores: Vec<f64>,
    pub noised_scores: Vec<f64>,
    /// M×N gate probabilities, on-graph.
    pub probs: Value,
    /// M×N reweighted probabilities, on-graph.
    pub reweighted: Value,
    /// Per token: selected (expert id, fusion weight), possibly empty when
    /// every candidate was at capacity (residual bypass).
    pub selected: Vec<Vec<(usize, f64)>>,
    pub complexity: f64,
}

pub fn init_moe(store: &mut ParamStore, rng: &Rng, cfg: &ModelConfig) {
    store.xavier(rng, "moe.gate.w", cfg.d, cfg.experts);
    store.zeros("moe.gate.b", 1, cfg.experts);
    store.insert("moe.cmplx.alpha", 1, 1, vec![0.5]);
    store.insert("moe.cmplx.beta", 1, 1, vec![0.5]);
    store.insert("moe.cmplx.psi", 1, PSI_INIT.len(), PSI_INIT.to_vec());
    for e in 0..cfg.experts {
        store.xavier(rng, &format!("moe.expert{e}.ffn.w1"), cfg.d, 4 * cfg.d);
        store.zeros(&format!("moe.expert{e}.ffn.b1"), 1, 4 * cfg.d);
        store.xavier(rng, &format!("moe.expert{e}.ffn.w2"), 4 * cfg.d, cfg.d);
        store.zeros(&format!("moe.expert{e}.ffn.b2"), 1, cfg.d);
    }
}

/// The learnable structural complexity metric:
/// `c = alpha * predicted_element_count + beta * psi[chart_type]`.
pub fn complexity_score(
    store: &ParamStore,
    g: &Graph,
    count: &Value,
    chart_type: ChartType,
) -> Value {
    let alpha = store.bind(g, "moe.cmplx.alpha");
    let beta = store.bind(g, "moe.cmplx.beta");
    let psi = store.bind(g, "moe.cmplx.psi");
    let psi_t = psi.select_entry(0, chart_type.index());
    alpha.mul(count).add(&beta.mul(&psi_t))
}

/// Gate scores and probabilities. Gaussian exploration noise is injected only
/// in training mode.
pub fn gate(
    store: &ParamStore,
    g: &Graph,
    tokens: &Value,
    sigma: f64,
    train: bool,
    rng: &mut Rng,
) -> (Value, Vec<f64>, Vec<f64>) {
    assert!(sigma >= 0.0, "negative routing noise");
    let w = store.bind(g, "moe.gate.w");
    let b = store.bind(g, "moe.gate.b");
    let scores = tokens.matmul(&w).add_row(&b);
    let raw = scores.data().to_vec();
    let noised_value = if train && sigma > 0.0 {
        let noise: Vec<f64> = (0..raw.len()).map(|_| rng.normal(0.0, sigma)).collect();
        scores.add(&g.constant(scores.rows(), scores.cols(), noise))
    } else {
        scores
    };
    let noised = noised_value.data().to_vec();
    (noised_value.softmax_rows(), raw, noised)
}

fn check_distribution_rows(p: &Value) -> Result<()> {
    let d = p.data();
    let n = p.cols();
    for r in 0..p.rows() {
        let row = &d[r * n..(r + 1) * n];
        if row.iter().any(|&v| v < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!(
                "row {r} of routing probs is not a distribution"
            )));
        }
    }
    Ok(())
}

/// Complexity reweighting of gate probabilities. `c` is a 1×1 graph value so
/// gradients flow into the complexity head in sharpen mode.
pub fn reweight(p: &Value, c: &Value, temperature: f64, mode: ReweightMode) -> Result<Value> {
    if temperature <= 0.0 {
        return Err(Error::contract(format!(
            "routing temperature {temperature} must be positive"
        )));
    }
    check_distribution_rows(p)?;
    match mode {
        ReweightMode::Literal => {
            // p_i * exp(c/T) / sum_j p_j * exp(c/T), computed as published
            let factor = c.scale(1.0 / temperature).exp();
            let q = p.mul_scalar_value(&factor);
            Ok(q.mul_col(&q.row_sum().recip()))
        }
        ReweightMode::Sharpen => {
            let exponent = c.scale(1.0 / temperature).add_scalar(1.0);
            let logits = p.add_scalar(1e-300).ln().mul_scalar_value(&exponent);
            Ok(logits.softmax_rows())
        }
    }
}

/// Candidate ranking for one token: experts ordered by descending p', ties
/// broken by lower id.
fn ranked_experts(row: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    ids
}

/// Select experts per token under the capacity limit. Returns per-token expert
/// ids in selection order. Overflow falls through to the token's next-ranked
/// unselected expert; a token whose every candidate is full gets an empty set
/// (residual bypass).
pub fn dispatch(
    p_prime: &[f64],
    m: usize,
    n: usize,
    mode: DispatchMode,
    k: usize,
    capacity: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::contract(format!("top-k {k} outside [1, {n}]")));
    }
    assert_eq!(p_prime.len(), m * n);
    let mut counts = vec![0usize; n];
    let mut out = Vec::with_capacity(m);
    for t in 0..m {
        let row = &p_prime[t * n..(t + 1) * n];
        // preference order: the k primary picks, then fall-through candidates
        let order = match mode {
            DispatchMode::TopK => ranked_experts(row),
            DispatchMode::Probabilistic => {
                let mut weights = row.to_vec();
                let mut picks = Vec::with_capacity(k);
                for _ in 0..k {
                    if weights.iter().sum::<f64>() <= 0.0 {
                        break;
                    }
                    let e = rng.categorical(&weights);
                    weights[e] = 0.0;
                    picks.push(e);
                }
                let mut rest = ranked_experts(row);
                rest.retain(|e| !picks.contains(e));
                picks.extend(rest);
                picks
            }
        };
        let mut selected = Vec::with_capacity(k);
        for &e in &order {
            if selected.len() == k {
                break;
            }
            if counts[e] < capacity {
                counts[e] += 1;
                selected.push(e);
            }
        }
        out.push(selected);
    }
    debug_assert!(counts.iter().all(|&c| c <= capacity));
    Ok(out)
}

fn expert_forward(store: &ParamStore, g: &Graph, e: usize, x: &Value) -> Value {
    let w1 = store.bind(g, &format!("moe.expert{e}.ffn.w1"));
    let b1 = store.bind(g, &format!("moe.expert{e}.ffn.b1"));
    let w2 = store.bind(g, &format!("moe.expert{e}.ffn.w2"));
    let b2 = store.bind(g, &format!("moe.expert{e}.ffn.b2"));
    x.matmul(&w1).add_row(&b1).silu().matmul(&w2).add_row(&b2)
}

/// Weighted expert fusion with a residual connection: per token,
/// `residual + sum over selected experts of weight * expert(input)`, where the
/// weights are the renormalized reweighted probabilities of the selected set
/// (differentiable through the gate). Bypassed tokens return the residual.
pub fn fuse(
    store: &ParamStore,
    g: &Graph,
    residual: &Value,
    expert_input: &Value,
    reweighted: &Value,
    selections: &[Vec<usize>],
    experts: usize,
) -> (Value, Vec<Vec<(usize, f64)>>) {
    let m = expert_input.rows();
    assert_eq!(selections.len(), m);
    // per-token fusion weights as graph scalars
    let mut weight_values: Vec<Vec<(usize, Value)>> = Vec::with_capacity(m);
    for (t, sel) in selections.iter().enumerate() {
        if sel.is_empty() {
            weight_values.push(Vec::new());
            continue;
        }
        let entries: Vec<Value> = sel
            .iter()
            .map(|&e| reweighted.select_entry(t, e))
            .collect();
        let mut denom = entries[0].clone();
        for e in &entries[1..] {
            denom = denom.add(e);
        }
        let inv = denom.recip();
        weight_values.push(
            sel.iter()
                .zip(entries)
                .map(|(&e, v)| (e, v.mul(&inv)))
                .collect(),
        );
    }
    let mut out = residual.clone();
    for e in 0..experts {
        let mut token_ids = Vec::new();
        let mut weights = Vec::new();
        for (t, wv) in weight_values.iter().enumerate() {
            if let Some((_, w)) = wv.iter().find(|(id, _)| *id == e) {
                token_ids.push(t);
                weights.push(w.clone());
            }
        }
        if token_ids.is_empty() {
            continue;
        }
        let x = expert_input.gather_rows(&token_ids);
        let y = expert_forward(store, g, e, &x);
        let wcol = g.stack_scalars(&weights);
        out = out.add(&y.mul_col(&wcol).scatter_rows(&token_ids, m));
    }
    let selected = weight_values
        .into_iter()
        .map(|wv| wv.into_iter().map(|(e, v)| (e, v.item())).collect())
        .collect();
    (out, selected)
}

/// The full MoE layer for one chart: gate → reweight → dispatch → fuse.
#[allow(clippy::too_many_arguments)]
pub fn moe_layer(
    store: &ParamStore,
    g: &Graph,
    cfg: &ModelConfig,
    residual: &Value,
    expert_input: &Value,
    complexity: &Value,
    train: bool,
    rng: &mut Rng,
) -> Result<(Value, RoutingDecision)> {
    let (probs, raw_scores, noised_scores) =
        gate(store, g, expert_input, cfg.sigma, train, rng);
    let reweighted = reweight(&probs, complexity, cfg.temperature, cfg.reweight)?;
    let selections = dispatch(
        &reweighted.data(),
        expert_input.rows(),
        cfg.experts,
        cfg.dispatch,
        cfg.top_k,
        cfg.capacity,
        rng,
    )?;
    let (out, selected) = fuse(
        store,
        g,
        residual,
        expert_input,
        &reweighted,
        &selections,
        cfg.experts,
    );
    let decision = RoutingDecision {
        raw_scores,
        noised_scores,
        complexity: complexity.item(),
        probs,
        reweighted,
        selected,
    };
    Ok((out, decision))
}

/// Load-balancing loss over a batch of M×N probability matrices. Default form
/// penalizes the batch-mean routing distribution's deviation from uniform;
/// `per_token` applies the deviation per token before averaging.
pub fn load_balance_loss(g: &Graph, probs: &[&Value], per_token: bool) -> Value {
    assert!(!probs.is_empty());
    let n = probs[0].cols();
    if per_token {
        let mut acc = g.scalar(0.0);
        for p in probs {
            let dev = p.add_scalar(-1.0 / n as f64);
            acc = acc.add(&dev.mul(&dev).row_sum().mean());
        }
        return acc.scale(1.0 / probs.len() as f64);
    }
    let mut mean = colmean(g, probs[0]);
    for p in &probs[1..] {
        mean = mean.add(&colmean(g, p));
    }
    let dev = mean.scale(1.0 / probs.len() as f64).add_scalar(-1.0 / n as f64);
    dev.mul(&dev).sum()
}

fn colmean(g: &Graph, p: &Value) -> Value {
    let m = p.rows();
    g.constant(1, m, vec![1.0 / m as f64; m]).matmul(p)
}

/// Mean KL divergence from uniform: `mean over tokens of sum_i p_i log(p_i N)`
/// with `0 log 0 := 0`.
pub fn router_kl_loss(g: &Graph, probs: &[&Value]) -> Value {
    assert!(!probs.is_empty());
    let n = probs[0].cols() as f64;
    let mut acc = g.scalar(0.0);
    for p in probs {
        let logs = p.add_scalar(1e-300).ln().add_scalar(n.ln());
        acc = acc.add(&p.mul(&logs).row_sum().mean());
    }
    acc.scale(1.0 / probs.len() as f64)
}

/// Rolling-window utilization accounting: counts routed token-slots per
/// expert (and per chart type) over the last `window` training steps.
#[derive(Debug, Clone)]
pub struct UtilizationTracker {
    experts: usize,
    window: usize,
    steps: VecDeque<Vec<u64>>,
    /// experts × 5 chart types, aggregated over the current window.
    steps_by_type: VecDeque<Vec<u64>>,
}

impl UtilizationTracker {
    pub fn new(experts: usize, window: usize) -> Self {
        assert!(window > 0);
        Self {
            experts,
            window,
            steps: VecDeque::new(),
            steps_by_type: VecDeque::new(),
        }
    }

    pub fn default_window(experts: usize) -> Self {
        Self::new(experts, 1000)
    }

    /// Record one training step's routing across the batch.
    pub fn record_step(&mut self, per_sample: &[(ChartType, &[Vec<(usize, f64)>])]) {
        let mut counts = vec![0u64; self.experts];
        let mut by_type = vec![0u64; self.experts * ChartType::ALL.len()];
        for (chart_type, selections) in per_sample {
            for sel in selections.iter() {
                for &(e, _) in sel {
                    counts[e] += 1;
                    by_type[e * ChartType::ALL.len() + chart_type.index()] += 1;
                }
            }
        }
        self.steps.push_back(counts);
        self.steps_by_type.push_back(by_type);
        if self.steps.len() > self.window {
            self.steps.pop_front();
            self.steps_by_type.pop_front();
        }
    }

    pub fn steps_recorded(&self) -> usize {
        self.steps.len()
    }

    /// Fraction of routed token-slots per expert over the window; all zeros
    /// before any routing happened.
    pub fn utilization(&self) -> Vec<f64> {
        let mut totals = vec![0u64; self.experts];
        for step in &self.steps {
            for (t, c) in totals.iter_mut().zip(step) {
                *t += c;
            }
        }
        let total: u64 = totals.iter().sum();
        if total == 0 {
            return vec![0.0; self.experts];
        }
        totals.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// CSV heatmap: rows = experts, columns = chart types, values = the
    /// expert's share of that type's routed slots over the window.
    pub fn heatmap_csv(&self) -> String {
        let types = ChartType::ALL;
        let mut totals = vec![0u64; self.experts * types.len()];
        for step in &self.steps_by_type {
            for (t, c) in totals.iter_mut().zip(step) {
                *t += c;
            }
        }
        let mut col_sums = vec![0u64; types.len()];
        for e in 0..self.experts {
            for (ti, s) in col_sums.iter_mut().enumerate() {
                *s += totals[e * types.len() + ti];
            }
        }
        let mut out = String::from("expert");
        for t in types {
            out.push(',');
            out.push_str(t.name());
        }
        out.push('\n');
        for e in 0..self.experts {
            out.push_str(&format!("{e}"));
            for (ti, &s) in col_sums.iter().enumerate() {
                let share = if s == 0 {
                    0.0
                } else {
                    totals[e * types.len() + ti] as f64 / s as f64
                };
                out.push_str(&format!(",{share:.6}"));
            }
            out.push('\n');
        }
        out
    }
}
