//! Low-rank adaptation of named weight matrices.
//!
//! An adapter attaches to a frozen base matrix `W0` (in×out) and contributes
//! `(alpha/r) · x·A·B` on the forward path, where `A` is in×r (uniform init in
//! ±0.01) and `B` is r×out (zero init, so fresh adapters are exact no-ops).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::model::params::ParamStore;
use crate::numerics::{la, Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

/// Which weight matrices receive adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPreset {
    /// Query/key/value projections of every attention layer.
    Attn,
    /// Attention output projections and the cross-attention context projection.
    Out,
    /// Both of the above.
    AttnOut,
    /// Attention q/k/v plus transformer-block feed-forward matrices
    /// (expert feed-forwards are routing-owned and never adapted).
    AttnMlp,
}

impl TargetPreset {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "attn" => Ok(TargetPreset::Attn),
            "out" => Ok(TargetPreset::Out),
            "attn+out" => Ok(TargetPreset::AttnOut),
            "attn+mlp" => Ok(TargetPreset::AttnMlp),
            other => Err(Error::Config(format!(
                "unknown lora target preset {other:?} (expected attn, out, attn+out, attn+mlp)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TargetPreset::Attn => "attn",
            TargetPreset::Out => "out",
            TargetPreset::AttnOut => "attn+out",
            TargetPreset::AttnMlp => "attn+mlp",
        }
    }

    fn is_attn(name: &str) -> bool {
        name.ends_with(".wq") || name.ends_with(".wk") || name.ends_with(".wv")
    }

    fn is_out(name: &str) -> bool {
        name.ends_with(".wo") || name.ends_with(".cross.proj")
    }

    fn is_mlp(name: &str) -> bool {
        (name.ends_with(".ffn.w1") || name.ends_with(".ffn.w2")) && !name.starts_with("moe.")
    }

    /// Whether a parameter name belongs to this preset.
    pub fn matches(&self, name: &str) -> bool {
        match self {
            TargetPreset::Attn => Self::is_attn(name),
            TargetPreset::Out => Self::is_out(name),
            TargetPreset::AttnOut => Self::is_attn(name) || Self::is_out(name),
            TargetPreset::AttnMlp => Self::is_attn(name) || Self::is_mlp(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoRAAdapter {
    pub target: String,
    pub rank: usize,
    /// The scaling numerator; the forward factor is `alpha / rank`.
    pub alpha: f64,
    pub merged: bool,
}

impl LoRAAdapter {
    pub fn a_name(&self) -> String {
        format!("lora.{}.a", self.target)
    }

    pub fn b_name(&self) -> String {
        format!("lora.{}.b", self.target)
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// All adapters of a model, keyed by target weight name.
#[derive(Debug, Clone, Default)]
pub struct AdapterSet {
    adapters: IndexMap<String, LoRAAdapter>,
}

impl AdapterSet {
    pub fn none() -> Self {
        Self::default()
    }

    /// Create fresh adapters for every store parameter matching `preset`.
    pub fn create(
        store: &mut ParamStore,
        rng: &Rng,
        preset: TargetPreset,
        rank: usize,
        alpha: f64,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Config("lora rank must be positive".into()));
        }
        if alpha <= 0.0 {
            return Err(Error::Config("lora alpha must be positive".into()));
        }
        let targets: Vec<(String, usize, usize)> = store
            .iter()
            .filter(|(name, _)| preset.matches(name))
            .map(|(name, p)| (name.to_string(), p.rows, p.cols))
            .collect();
        if targets.is_empty() {
            return Err(Error::contract(format!(
                "preset {} matched no parameters",
                preset.as_str()
            )));
        }
        let mut adapters = IndexMap::new();
        for (target, rows, cols) in targets {
            if rank >= rows.min(cols) {
                return Err(Error::Config(format!(
                    "rank {rank} not strictly below min dim of {target} ({rows}x{cols})"
                )));
            }
            let adapter = LoRAAdapter {
                target: target.clone(),
                rank,
                alpha,
                merged: false,
            };
            let mut r = rng.child(&adapter.a_name());
            let a: Vec<f64> = (0..rows * rank).map(|_| r.uniform(-0.01, 0.01)).collect();
            store.insert(&adapter.a_name(), rows, rank, a);
            store.zeros(&adapter.b_name(), rank, cols);
            adapters.insert(target, adapter);
        }
        Ok(AdapterSet { adapters })
    }

    pub fn get(&self, target: &str) -> Option<&LoRAAdapter> {
        self.adapters.get(target)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LoRAAdapter> {
        self.adapters.values()
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }

    /// Whether a parameter name is one of this set's A/B matrices.
    pub fn owns_param(&self, name: &str) -> bool {
        name.strip_prefix("lora.")
            .and_then(|rest| rest.strip_suffix(".a").or_else(|| rest.strip_suffix(".b")))
            .is_some_and(|target| self.adapters.contains_key(target))
    }

    /// Total adapter scalars (A plus B across all targets).
    pub fn param_count(&self, store: &ParamStore) -> usize {
        self.adapters
            .values()
            .map(|ad| store.get(&ad.a_name()).data.len() + store.get(&ad.b_name()).data.len())
            .sum()
    }

    /// `x · (W0 + (alpha/r)·A·B)`, with W0 frozen out of the gradient whenever
    /// its trainable flag is off. Merged adapters contribute nothing (their
    /// update already lives in W0).
    pub fn forward_adapted(
        &self,
        store: &ParamStore,
        g: &Graph,
        target: &str,
        x: &Value,
    ) -> Value {
        let base = x.matmul(&store.bind(g, target));
        match self.adapters.get(target) {
            Some(ad) if !ad.merged => {
                let a = store.bind(g, &ad.a_name());
                let b = store.bind(g, &ad.b_name());
                base.add(&x.matmul(&a).matmul(&b).scale(ad.scaling()))
            }
            _ => base,
        }
    }

    /// Fold one adapter into its base weight: `W0 += (alpha/r)·A·B`. A second
    /// merge of the same adapter is an error (it would double the update).
    pub fn merge(&mut self, store: &mut ParamStore, target: &str) -> Result<()> {
        let ad = self
            .adapters
            .get_mut(target)
            .ok_or_else(|| Error::contract(format!("no adapter on {target}")))?;
        if ad.merged {
            return Err(Error::contract(format!("adapter on {target} already merged")));
        }
        let a = store.get(&ad.a_name()).clone();
        let b = store.get(&ad.b_name()).clone();
        let delta = la::matmul(&a.data, &b.data, a.rows, a.cols, b.cols);
        let s = ad.scaling();
        let w0 = store.get_mut(target);
        for (w, d) in w0.data.iter_mut().zip(&delta) {
            *w += s * d;
        }
        ad.merged = true;
        Ok(())
    }

    /// Frobenius regularizer: `lambda · sum(|A|_F^2 + |B|_F^2)`.
    pub fn frobenius_penalty(&self, store: &ParamStore, g: &Graph, lambda: f64) -> Value {
        assert!(lambda >= 0.0, "negative frobenius weight");
        let mut acc = g.scalar(0.0);
        for ad in self.adapters.values() {
            let a = store.bind(g, &ad.a_name());
            let b = store.bind(g, &ad.b_name());
            acc = acc.add(&a.mul(&a).sum()).add(&b.mul(&b).sum());
        }
        acc.scale(lambda)
    }

    /// Adapter-only checkpoint: named A/B tensors plus per-target metadata.
    pub fn to_json(&self, store: &ParamStore) -> serde_json::Value {
        let mut meta = serde_json::Map::new();
        let mut targets: Vec<&LoRAAdapter> = self.adapters.values().collect();
        targets.sort_by(|a, b| a.target.cmp(&b.target));
        for ad in targets {
            meta.insert(ad.target.clone(), serde_json::to_value(ad).unwrap());
        }
        serde_json::json!({
            "adapters": serde_json::Value::Object(meta),
            "tensors": store.to_json_subset(|n| self.owns_param(n)),
        })
    }

    pub fn load_json(&mut self, store: &mut ParamStore, json: &serde_json::Value) -> Result<()> {
        let meta = json
            .get("adapters")
            .and_then(|v| v.as_object())
            .ok_or_else(|| Error::Serde("adapter checkpoint missing `adapters`".into()))?;
        for (target, val) in meta {
            let incoming: LoRAAdapter = serde_json::from_value(val.clone())
                .map_err(|e| Error::Serde(format!("adapter {target}: {e}")))?;
            let existing = self
                .adapters
                .get_mut(target)
                .ok_or_else(|| Error::contract(format!("no adapter on {target}")))?;
            if existing.rank != incoming.rank {
                return Err(Error::contract(format!(
                    "adapter {target} rank mismatch: {} vs {}",
                    existing.rank, incoming.rank
                )));
            }
            *existing = incoming;
        }
        let tensors = json
            .get("tensors")
            .ok_or_else(|| Error::Serde("adapter checkpoint missing `tensors`".into()))?;
        store.load_json_subset(tensors)
    }
}
