//! AdamW with decoupled weight decay, cosine annealing, and per-tensor
//! gradient clipping.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::GradMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moments per parameter plus the shared step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub first_moment: HashMap<String, Vec<f64>>,
    pub second_moment: HashMap<String, Vec<f64>>,
    pub step_count: u64,
    pub config: AdamWConfig,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig) -> Self {
        OptimizerState {
            first_moment: HashMap::new(),
            second_moment: HashMap::new(),
            step_count: 0,
            config,
        }
    }
}

/// One AdamW update over named parameters. Decoupled decay is applied first
/// (`p *= 1 - lr * wd`), then the bias-corrected moment step. Parameters
/// without an entry in `grads` are left untouched (no decay either — they
/// did not take part in the step).
pub fn adamw_step<'a, I>(
    params: I,
    grads: &GradMap,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a mut [f64])>,
{
    if lr <= 0.0 {
        return Err(Error::contract(format!("adamw_step: lr must be > 0, got {lr}")));
    }
    state.step_count += 1;
    let t = state.step_count;
    let cfg = state.config;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for (name, p) in params {
        let Some(g) = grads.get(name) else { continue };
        if g.len() != p.len() {
            return Err(Error::contract(format!(
                "adamw_step: shape mismatch for `{name}`: param {} vs grad {}",
                p.len(),
                g.len()
            )));
        }
        let m = state
            .first_moment
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; p.len()]);
        let v = state
            .second_moment
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; p.len()]);
        if m.len() != p.len() || v.len() != p.len() {
            return Err(Error::contract(format!(
                "adamw_step: moment shape mismatch for `{name}`"
            )));
        }
        let decay = 1.0 - lr * cfg.weight_decay;
        for i in 0..p.len() {
            p[i] *= decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Cosine annealing schedule bounds.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LRSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    pub t_max: u64,
}

impl LRSchedule {
    pub fn new(eta_max: f64, eta_min: f64, t_max: u64) -> Self {
        assert!(eta_min < eta_max && eta_min > 0.0 && t_max > 0);
        LRSchedule {
            eta_max,
            eta_min,
            t_max,
        }
    }
}

/// `eta_min + (eta_max - eta_min) (1 + cos(pi t / t_max)) / 2`, clamped to
/// `eta_min` past `t_max`.
pub fn cosine_lr(t: u64, sched: &LRSchedule) -> f64 {
    if t > sched.t_max {
        log::warn!(
            "cosine_lr: step {t} beyond t_max {}; clamping to eta_min",
            sched.t_max
        );
        return sched.eta_min;
    }
    let phase = std::f64::consts::PI * t as f64 / sched.t_max as f64;
    sched.eta_min + 0.5 * (sched.eta_max - sched.eta_min) * (1.0 + phase.cos())
}

/// Per-tensor norm clipping: `g <- g / max(1, ||g|| / c)`.
pub fn clip_gradients(grads: &mut GradMap, c: f64) {
    assert!(c > 0.0, "clip_gradients: threshold must be positive");
    for g in grads.values_mut() {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = (norm / c).max(1.0);
        if denom > 1.0 {
            for v in g.iter_mut() {
                *v /= denom;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_map(name: &str, g: Vec<f64>) -> GradMap {
        let mut m = GradMap::new();
        m.insert(name.to_string(), g);
        m
    }

    #[test]
    fn pure_decay_when_grad_zero() {
        let mut p = vec![1.0];
        let grads = grad_map("w", vec![0.0]);
        let mut state = OptimizerState::new(AdamWConfig::default());
        adamw_step(
            std::iter::once(("w", p.as_mut_slice())),
            &grads,
            &mut state,
            1e-4,
        )
        .unwrap();
        // 1.0 * (1 - 1e-4 * 0.01) = 1 - 1e-6
        assert!((p[0] - 0.999_999).abs() < 1e-15);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![0.0];
        let grads = grad_map("w", vec![1.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = OptimizerState::new(cfg);
        let lr = 1e-4;
        adamw_step(
            std::iter::once(("w", p.as_mut_slice())),
            &grads,
            &mut state,
            lr,
        )
        .unwrap();
        // m_hat = 1, v_hat = 1 -> update = -lr / (1 + eps)
        let expected = -lr / (1.0 + cfg.epsilon);
        assert!((p[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn three_steps_match_scalar_reference() {
        // Independent scalar re-implementation of the same rule, on a
        // quadratic f(w) = (w - 3)^2 / 2, grad = w - 3.
        let cfg = AdamWConfig::default();
        let lr = 0.01;

        let mut w_ref = 10.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=3 {
            let g = w_ref - 3.0;
            w_ref *= 1.0 - lr * cfg.weight_decay;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            w_ref -= lr * mh / (vh.sqrt() + cfg.epsilon);
        }

        let mut p = vec![10.0];
        let mut state = OptimizerState::new(cfg);
        for _ in 0..3 {
            let grads = grad_map("w", vec![p[0] - 3.0]);
            adamw_step(
                std::iter::once(("w", p.as_mut_slice())),
                &grads,
                &mut state,
                lr,
            )
            .unwrap();
        }
        assert!((p[0] - w_ref).abs() < 1e-15);
        assert_eq!(state.step_count, 3);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![0.0, 0.0];
        let grads = grad_map("w", vec![1.0]);
        let mut state = OptimizerState::new(AdamWConfig::default());
        let err = adamw_step(
            std::iter::once(("w", p.as_mut_slice())),
            &grads,
            &mut state,
            1e-4,
        );
        assert!(err.is_err());
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let sched = LRSchedule::new(1e-4, 1e-6, 50_000);
        assert!((cosine_lr(0, &sched) - 1e-4).abs() < 1e-12);
        assert!((cosine_lr(50_000, &sched) - 1e-6).abs() < 1e-12);
        assert!((cosine_lr(25_000, &sched) - 5.05e-5).abs() < 1e-12);
    }

    #[test]
    fn cosine_clamps_past_t_max() {
        let sched = LRSchedule::new(1e-4, 1e-6, 100);
        assert_eq!(cosine_lr(101, &sched), 1e-6);
    }

    #[test]
    fn cosine_monotone_non_increasing() {
        let sched = LRSchedule::new(1e-4, 1e-6, 1000);
        let mut prev = f64::INFINITY;
        for t in 0..=1000 {
            let lr = cosine_lr(t, &sched);
            assert!(lr <= prev + 1e-18);
            assert!((1e-6..=1e-4).contains(&lr));
            prev = lr;
        }
    }

    #[test]
    fn clip_norms() {
        // ||(3,4)|| = 5, c = 1 -> (0.6, 0.8)
        let mut grads = grad_map("w", vec![3.0, 4.0]);
        clip_gradients(&mut grads, 1.0);
        let g = &grads["w"];
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);

        // below threshold unchanged
        let mut grads = grad_map("w", vec![0.3, 0.4]);
        clip_gradients(&mut grads, 1.0);
        assert_eq!(grads["w"], vec![0.3, 0.4]);

        // zero passes through
        let mut grads = grad_map("w", vec![0.0, 0.0]);
        clip_gradients(&mut grads, 1.0);
        assert_eq!(grads["w"], vec![0.0, 0.0]);
    }

    #[test]
    fn clip_idempotent() {
        let mut a = grad_map("w", vec![2.0, -1.0, 0.5]);
        clip_gradients(&mut a, 1.0);
        let mut b = a.clone();
        clip_gradients(&mut b, 1.0);
        for (x, y) in a["w"].iter().zip(b["w"].iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
