//! The training loop: per step, augment a batch, run the full forward pass,
//! assemble the multi-task loss, backprop, clip, and take an AdamW step on a
//! cosine schedule — logging every step to a JSONL run log and evaluating /
//! early-stopping on the validation split.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chartlab::{augment_image, ChartType, DataRecord, Dataset};
use crate::model::infer::{GenMode, InferenceModel};
use crate::model::{moe, Model, UtilizationTracker};
use crate::numerics::{clip_gradients, cosine_lr, AdamWConfig, Graph, LRSchedule, OptimizerState};
use crate::rng::Rng;
use crate::training::checkpoint::save_checkpoint;
use crate::training::config::RunConfig;
use crate::training::eval::{evaluate, write_metrics_csv, MetricsRecord};
use crate::training::loss::{compose_loss, semantic_gap, utilization_regularizer, LossBreakdown, LossWeights};
use crate::{Error, Result};

/// One line of the run log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub breakdown: LossBreakdown,
    pub utilization: Vec<f64>,
}

/// What a run produced, plus the accounting the ablation table needs.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    pub evals: Vec<MetricsRecord>,
    pub final_utilization: Vec<f64>,
    pub initial_syntax: f64,
    pub final_syntax: f64,
    /// Largest live tape size observed during any forward+loss build.
    pub peak_activation_scalars: usize,
    pub total_params: usize,
    pub trainable_params: usize,
    pub checkpoint: PathBuf,
    pub run_log: PathBuf,
    pub metrics_csv: PathBuf,
    pub wall_secs: f64,
}

impl TrainOutcome {
    /// Peak-memory proxy in scalars: parameters + AdamW moments (2 per
    /// trainable scalar) + the largest live activation tape.
    pub fn memory_proxy(&self) -> usize {
        self.total_params + 2 * self.trainable_params + self.peak_activation_scalars
    }
}

fn first_non_finite_grad(grads: &crate::numerics::GradMap) -> Option<String> {
    let mut names: Vec<&String> = grads.keys().collect();
    names.sort();
    for name in names {
        if grads[name].iter().any(|v| !v.is_finite()) {
            return Some(name.clone());
        }
    }
    None
}

/// Train per the config, writing `model.ckpt`, `run_log.jsonl`,
/// `metrics.csv`, `utilization_heatmap.csv`, and a wall-clock sidecar
/// (`wallclock.txt`, excluded from reproducibility guarantees) under
/// `out_dir`. Zero epochs produces the initial evaluation and a checkpoint
/// of the initial weights.
pub fn train(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();

    let mut model = Model::new(cfg.model_config(), cfg.mode, cfg.lora_config(), cfg.seed)?;
    let weights = LossWeights {
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        lambda3: cfg.lambda3,
        lambda_load: cfg.lambda_load,
        lambda_frob: cfg.lambda_frob,
        lambda_count: cfg.lambda_count,
    };
    let sched = LRSchedule::new(cfg.lr, cfg.lr_min, cfg.t_max);
    let mut opt = OptimizerState::new(AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    });
    let mut tracker = UtilizationTracker::default_window(cfg.moe.experts);
    let root = Rng::from_seed(cfg.seed).child("train");

    let train_n = if cfg.train_limit == 0 {
        dataset.train.len()
    } else {
        cfg.train_limit.min(dataset.train.len())
    };
    if train_n == 0 {
        return Err(Error::contract("training split is empty"));
    }
    let records = &dataset.train[..train_n];

    let run_log = out_dir.join("run_log.jsonl");
    let mut log = std::fs::File::create(&run_log)?;
    let ckpt = out_dir.join("model.ckpt");
    let metrics_csv = out_dir.join("metrics.csv");

    let mut evals = Vec::new();
    let eval_at = |model: &Model, step: u64, evals: &mut Vec<MetricsRecord>| -> Result<f64> {
        let rec = evaluate(
            model,
            &dataset.val,
            "val",
            step,
            cfg.tau,
            cfg.seed,
            cfg.eval_limit,
        )?;
        let success = rec.success_rate;
        evals.push(rec);
        Ok(success)
    };

    let mut best_success = eval_at(&model, 0, &mut evals)?;
    let mut stale_evals = 0usize;
    let mut step: u64 = 0;
    let mut peak_activation = 0usize;
    let mut initial_syntax = f64::NAN;
    let mut final_syntax = f64::NAN;
    let mut last_gap = 0.0;
    let mut stop = false;

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_n).collect();
        root.child_idx("epoch", epoch as u64).shuffle(&mut order);
        for batch_ids in order.chunks(cfg.batch) {
            step += 1;
            let mut step_rng = root.child_idx("step", step);
            let g = Graph::new();
            let mut syntax_sum: Option<crate::numerics::Value> = None;
            let mut count_sum: Option<crate::numerics::Value> = None;
            let mut probs = Vec::new();
            let mut routed: Vec<(ChartType, Vec<Vec<(usize, f64)>>)> = Vec::new();
            for &idx in batch_ids {
                let record = &records[idx];
                let mut image = record.raster()?.to_f64();
                if cfg.augment {
                    image = augment_image(&mut step_rng, cfg.model.img, cfg.model.img, &image);
                }
                let fwd = model.forward_sample(
                    &g,
                    &image,
                    record.spec.chart_type,
                    &record.tokens,
                    true,
                    &mut step_rng,
                )?;
                let loss = crate::model::decoder::syntax_loss(&fwd.logits, &record.tokens)?;
                syntax_sum = Some(match syntax_sum {
                    Some(acc) => acc.add(&loss),
                    None => loss,
                });
                let count_err = fwd
                    .count_pred
                    .add_scalar(-(record.spec.elements.len() as f64));
                let count_sq = count_err.mul(&count_err);
                count_sum = Some(match count_sum {
                    Some(acc) => acc.add(&count_sq),
                    None => count_sq,
                });
                probs.push(fwd.decision.probs.clone());
                routed.push((record.spec.chart_type, fwd.decision.selected.clone()));
            }
            let syntax = syntax_sum
                .expect("non-empty batch")
                .scale(1.0 / batch_ids.len() as f64);
            let count = count_sum
                .expect("non-empty batch")
                .scale(1.0 / batch_ids.len() as f64);
            let prob_refs: Vec<&crate::numerics::Value> = probs.iter().collect();
            let router_kl = moe::router_kl_loss(&g, &prob_refs);
            let load = moe::load_balance_loss(&g, &prob_refs, false);
            let frobenius = model.adapters.frobenius_penalty(&model.store, &g, 1.0);

            let routed_refs: Vec<(ChartType, &[Vec<(usize, f64)>])> =
                routed.iter().map(|(t, s)| (*t, s.as_slice())).collect();
            tracker.record_step(&routed_refs);
            let utilization = tracker.utilization();
            let util = utilization_regularizer(&utilization, cfg.lambda1);

            if step % cfg.semantic_interval as u64 == 0 {
                last_gap = measure_semantic_gap(
                    &model,
                    records,
                    batch_ids,
                    cfg.tau,
                    &root.child_idx("semantic", step),
                )?;
            }

            let (objective, breakdown) = compose_loss(
                &syntax,
                &router_kl,
                &load,
                &frobenius,
                &count,
                last_gap,
                util,
                cfg.semantic_mode,
                weights,
            )
            .map_err(|e| match e {
                Error::Numerical { node, .. } => Error::Numerical {
                    node,
                    detail: format!("non-finite loss at step {step}"),
                },
                other => other,
            })?;
            if initial_syntax.is_nan() {
                initial_syntax = breakdown.syntax;
            }
            final_syntax = breakdown.syntax;
            peak_activation = peak_activation.max(g.activation_scalars());

            let mut grads = g.backward(&objective)?;
            if let Some(name) = first_non_finite_grad(&grads) {
                return Err(Error::Numerical {
                    node: name,
                    detail: format!("non-finite gradient at step {step}"),
                });
            }
            clip_gradients(&mut grads, cfg.clip);
            let lr = cosine_lr(step - 1, &sched);
            crate::numerics::adamw_step(model.store.trainable_slices(), &grads, &mut opt, lr)?;

            let line = StepRecord {
                step,
                lr,
                breakdown,
                utilization: utilization.clone(),
            };
            serde_json::to_writer(&mut log, &line).map_err(|e| Error::Serde(e.to_string()))?;
            log.write_all(b"\n")?;

            if cfg.eval_interval > 0 && step % cfg.eval_interval as u64 == 0 {
                let success = eval_at(&model, step, &mut evals)?;
                if success > best_success {
                    best_success = success;
                    stale_evals = 0;
                } else {
                    stale_evals += 1;
                    if stale_evals > cfg.patience {
                        stop = true;
                        break 'epochs;
                    }
                }
            }
        }
        if cfg.eval_interval == 0 {
            let success = eval_at(&model, step, &mut evals)?;
            if success > best_success {
                best_success = success;
                stale_evals = 0;
            } else {
                stale_evals += 1;
                if stale_evals > cfg.patience {
                    stop = true;
                    break 'epochs;
                }
            }
        }
    }
    let _ = stop;

    save_checkpoint(&ckpt, &model, &cfg.hash(), cfg.seed)?;
    write_metrics_csv(&metrics_csv, &evals)?;
    std::fs::write(out_dir.join("utilization_heatmap.csv"), tracker.heatmap_csv())?;
    let wall_secs = started.elapsed().as_secs_f64();
    std::fs::write(out_dir.join("wallclock.txt"), format!("{wall_secs:.3}\n"))?;

    Ok(TrainOutcome {
        steps: step,
        evals,
        final_utilization: tracker.utilization(),
        initial_syntax,
        final_syntax,
        peak_activation_scalars: peak_activation,
        total_params: model.store.scalar_count(),
        trainable_params: model.store.trainable_scalar_count(),
        checkpoint: ckpt,
        run_log,
        metrics_csv,
        wall_secs,
    })
}

/// Greedy-decode the current batch and measure the mean IoU hinge gap.
fn measure_semantic_gap(
    model: &Model,
    records: &[DataRecord],
    batch_ids: &[usize],
    tau: f64,
    rng: &Rng,
) -> Result<f64> {
    let inf = InferenceModel::from_model(model)?;
    let mut ious = Vec::with_capacity(batch_ids.len());
    for (i, &idx) in batch_ids.iter().enumerate() {
        let record = &records[idx];
        let mut r = rng.child_idx("decode", i as u64);
        let image = record.raster()?.to_f64();
        let (program, _) = inf.generate(
            &image,
            record.spec.chart_type,
            GenMode::Greedy,
            model.cfg.max_len - 1,
            false,
            &mut r,
        )?;
        let iou_val = match crate::chartlab::execute(&program) {
            Ok(raster) => crate::chartlab::iou(&raster, &record.raster()?)?,
            Err(_) => 0.0,
        };
        ious.push(iou_val);
    }
    Ok(semantic_gap(&ious, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::{gen_dataset, TypeMix};
    use crate::training::checkpoint::load_checkpoint;

    fn tiny_cfg() -> RunConfig {
        RunConfig::from_toml(
            "epochs = 1\n\
             batch = 2\n\
             train_limit = 6\n\
             eval_limit = 4\n\
             semantic_interval = 2\n\
             model.d = 16\n\
             model.heads = 2\n\
             model.max_len = 96\n\
             moe.experts = 4\n\
             moe.capacity = 16\n\
             lora.rank = 4\n",
            &[],
        )
        .unwrap()
    }

    fn tiny_dataset() -> Dataset {
        gen_dataset(77, 20, &TypeMix::default_mix()).unwrap()
    }

    #[test]
    fn zero_epochs_is_initial_eval_only() {
        let mut cfg = tiny_cfg();
        cfg.epochs = 0;
        let data = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&cfg, &data, dir.path()).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.evals.len(), 1);
        assert!(out.checkpoint.exists());
        // checkpoint holds the initial weights
        let (loaded, _) = load_checkpoint(&out.checkpoint).unwrap();
        let fresh = Model::new(cfg.model_config(), cfg.mode, cfg.lora_config(), cfg.seed).unwrap();
        assert_eq!(
            loaded.store.get("dec.out.w").data,
            fresh.store.get("dec.out.w").data
        );
        assert_eq!(std::fs::read_to_string(out.run_log).unwrap(), "");
    }

    #[test]
    fn run_is_reproducible_byte_for_byte() {
        let cfg = tiny_cfg();
        let data = tiny_dataset();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        train(&cfg, &data, d1.path()).unwrap();
        train(&cfg, &data, d2.path()).unwrap();
        for name in ["run_log.jsonl", "model.ckpt", "metrics.csv", "utilization_heatmap.csv"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across same-seed runs");
        }
    }

    #[test]
    fn log_lines_satisfy_loss_identity_and_weights_move() {
        let cfg = tiny_cfg();
        let data = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&cfg, &data, dir.path()).unwrap();
        assert!(out.steps >= 3);
        let text = std::fs::read_to_string(&out.run_log).unwrap();
        let mut lines = 0;
        for line in text.lines() {
            let rec: StepRecord = serde_json::from_str(line).unwrap();
            assert!(rec.breakdown.identity_residual() < 1e-10);
            assert!(rec.lr > 0.0 && rec.lr <= cfg.lr);
            assert_eq!(rec.utilization.len(), cfg.moe.experts);
            lines += 1;
        }
        assert_eq!(lines as u64, out.steps);
        // trained weights differ from init
        let (loaded, _) = load_checkpoint(&out.checkpoint).unwrap();
        let fresh = Model::new(cfg.model_config(), cfg.mode, cfg.lora_config(), cfg.seed).unwrap();
        assert_ne!(
            loaded.store.get("dec.out.w").data,
            fresh.store.get("dec.out.w").data
        );
        assert!(out.peak_activation_scalars > 0);
        assert!(out.memory_proxy() > out.total_params);
    }

    #[test]
    fn lora_mode_freezes_base_weights() {
        let mut cfg = tiny_cfg();
        cfg.mode = crate::model::TrainMode::LoraOnly;
        let data = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let out = train(&cfg, &data, dir.path()).unwrap();
        let (loaded, _) = load_checkpoint(&out.checkpoint).unwrap();
        let fresh = Model::new(cfg.model_config(), cfg.mode, cfg.lora_config(), cfg.seed).unwrap();
        for name in ["enc.b0.attn.wq", "dec.b0.self.wv", "moe.expert0.ffn.w1", "enc.patch.w"] {
            assert_eq!(
                loaded.store.get(name).data,
                fresh.store.get(name).data,
                "{name} moved in lora-only mode"
            );
        }
        // but adapters did move
        let lora_name = loaded
            .store
            .names()
            .find(|n| n.starts_with("lora.") && n.ends_with(".a"))
            .unwrap()
            .to_string();
        assert_ne!(
            loaded.store.get(&lora_name).data,
            fresh.store.get(&lora_name).data
        );
    }
}
