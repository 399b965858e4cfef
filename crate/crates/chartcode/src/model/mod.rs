//! The chart-to-code model: patch-transformer encoder, a fusion block whose
//! feed-forward is the complexity-aware mixture-of-experts layer, a
//! cross-modal decoder, and LoRA adaptation — all parameterized through one
//! named [`ParamStore`] so fine-tuning modes are trainability assignments.

pub mod decoder;
pub mod encoder;
pub mod infer;
pub mod lora;
pub mod moe;
pub mod nn;
pub mod params;

use serde::{Deserialize, Serialize};

pub use lora::{AdapterSet, LoRAAdapter, TargetPreset};
pub use moe::{DispatchMode, ReweightMode, RoutingDecision, UtilizationTracker};
pub use params::{Param, ParamStore};

use crate::chartlab::{ChartType, Vocab};
use crate::numerics::{Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

/// Architecture and routing hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub img: usize,
    pub patch: usize,
    pub d: usize,
    pub heads: usize,
    pub enc_blocks: usize,
    pub dec_blocks: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub experts: usize,
    pub capacity: usize,
    pub top_k: usize,
    pub temperature: f64,
    pub sigma: f64,
    pub reweight: ReweightMode,
    pub dispatch: DispatchMode,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            img: 64,
            patch: 8,
            d: 64,
            heads: 4,
            enc_blocks: 2,
            dec_blocks: 2,
            vocab: Vocab::SIZE,
            max_len: 96,
            experts: 8,
            capacity: 32,
            top_k: 2,
            temperature: 1.0,
            sigma: 0.01,
            reweight: ReweightMode::Sharpen,
            dispatch: DispatchMode::TopK,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Number of visual tokens M.
    pub fn tokens_m(&self) -> usize {
        let side = self.img / self.patch;
        side * side
    }

    /// Scalars per flattened RGB patch.
    pub fn patch_dim(&self) -> usize {
        3 * self.patch * self.patch
    }

    pub fn validate(&self) -> Result<()> {
        if self.img % self.patch != 0 {
            return Err(Error::Config(format!(
                "image side {} not divisible by patch {}",
                self.img, self.patch
            )));
        }
        if self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "width {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        if self.experts < 2 {
            return Err(Error::Config("need at least 2 experts".into()));
        }
        if self.top_k == 0 || self.top_k > self.experts {
            return Err(Error::Config(format!(
                "top-k {} outside [1, {}]",
                self.top_k, self.experts
            )));
        }
        if self.temperature <= 0.0 || self.sigma < 0.0 {
            return Err(Error::Config("temperature must be > 0, sigma >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Which parameters train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Everything trains; no adapters.
    FullFinetune,
    /// Only adapters plus the task heads (gate, complexity, element count,
    /// output head); base weights and experts frozen.
    LoraOnly,
    /// LoRA set plus fully trainable experts (the default configuration).
    MoeLora,
}

impl TrainMode {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_finetune" => Ok(TrainMode::FullFinetune),
            "lora_only" => Ok(TrainMode::LoraOnly),
            "moe_lora" => Ok(TrainMode::MoeLora),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::FullFinetune => "full_finetune",
            TrainMode::LoraOnly => "lora_only",
            TrainMode::MoeLora => "moe_lora",
        }
    }
}

/// LoRA settings for adapter-bearing modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub targets: TargetPreset,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 16.0,
            targets: TargetPreset::AttnMlp,
        }
    }
}

/// One forward pass over a single chart.
pub struct SampleForward {
    /// (target_len + 1) × vocab logits.
    pub logits: Value,
    /// Predicted element count, 1×1.
    pub count_pred: Value,
    pub decision: RoutingDecision,
    /// Fused visual tokens consumed by the decoder, M×d.
    pub fused: Value,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub mode: TrainMode,
    pub lora: LoraConfig,
    pub store: ParamStore,
    pub adapters: AdapterSet,
}

impl Model {
    pub fn new(cfg: ModelConfig, mode: TrainMode, lora: LoraConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let rng = Rng::from_seed(seed).child("model-init");
        let mut store = ParamStore::new();
        encoder::init_encoder(&mut store, &rng, &cfg);
        nn::init_rms_norm(&mut store, "fuse.norm1", cfg.d);
        nn::init_attention(&mut store, &rng, "fuse.attn", cfg.d);
        nn::init_rms_norm(&mut store, "fuse.norm2", cfg.d);
        moe::init_moe(&mut store, &rng, &cfg);
        decoder::init_decoder(&mut store, &rng, &cfg);
        let adapters = match mode {
            TrainMode::FullFinetune => AdapterSet::none(),
            _ => AdapterSet::create(&mut store, &rng, lora.targets, lora.rank, lora.alpha)?,
        };
        let mut model = Model {
            cfg,
            mode,
            lora,
            store,
            adapters,
        };
        model.apply_mode();
        Ok(model)
    }

    /// Re-derive trainability flags from the mode.
    pub fn apply_mode(&mut self) {
        let mode = self.mode;
        self.store.set_trainable(|name| match mode {
            TrainMode::FullFinetune => true,
            TrainMode::LoraOnly => Self::is_head(name) || name.starts_with("lora."),
            TrainMode::MoeLora => {
                Self::is_head(name) || name.starts_with("lora.") || name.starts_with("moe.expert")
            }
        });
    }

    fn is_head(name: &str) -> bool {
        // the cross-modal score and gate count as heads: like the router they
        // are new structure rather than part of the adapted base stack, so
        // they train in every mode (the cross output projection stays with
        // the base weights — adapters cover it)
        name.starts_with("moe.gate")
            || name.starts_with("moe.cmplx")
            || name.starts_with("enc.count")
            || name.starts_with("dec.out")
            || (name.contains(".cross.") && !name.ends_with(".proj"))
    }

    pub fn trainable_fraction(&self) -> f64 {
        self.store.trainable_fraction()
    }

    /// Full forward pass for one chart: encode, fuse through the MoE block,
    /// decode teacher-forced.
    pub fn forward_sample(
        &self,
        g: &Graph,
        image: &[f64],
        chart_type: ChartType,
        target: &[u16],
        train: bool,
        rng: &mut Rng,
    ) -> Result<SampleForward> {
        let vt = encoder::encode(
            &self.store,
            &self.adapters,
            g,
            &self.cfg,
            image,
            chart_type,
            train,
            rng,
        )?;
        let count_pred = encoder::predict_element_count(&self.store, g, &self.cfg, &vt.tokens);
        // fusion block: self-attention, then the MoE layer as its feed-forward
        let normed = nn::rms_norm(&self.store, g, "fuse.norm1", &vt.tokens);
        let attn = nn::attention(
            &self.store,
            &self.adapters,
            g,
            "fuse.attn",
            &normed,
            &normed,
            self.cfg.heads,
            false,
        );
        let h = vt
            .tokens
            .add(&nn::dropout(g, &attn, self.cfg.dropout, train, rng));
        let complexity = moe::complexity_score(&self.store, g, &count_pred, chart_type);
        let moe_in = nn::rms_norm(&self.store, g, "fuse.norm2", &h);
        let (fused, decision) = moe::moe_layer(
            &self.store,
            g,
            &self.cfg,
            &h,
            &moe_in,
            &complexity,
            train,
            rng,
        )?;
        let logits = decoder::forward_teacher_forced(
            &self.store,
            &self.adapters,
            g,
            &self.cfg,
            &fused,
            target,
            train,
            rng,
        )?;
        Ok(SampleForward {
            logits,
            count_pred,
            decision,
            fused,
        })
    }
}
