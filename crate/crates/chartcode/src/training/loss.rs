//! Multi-task loss assembly: syntax cross-entropy, an optional
//! render-fidelity penalty, routing KL and load-balancing terms, the
//! windowed-utilization regularizer, the element-count head's squared
//! error, and the adapter Frobenius penalty.

use serde::{Deserialize, Serialize};

use crate::numerics::Value;
use crate::{Error, Result};

/// How the render-fidelity term enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticMode {
    /// Record mean max(0, τ − IoU) as a constant; no gradient through it.
    LogOnly,
    /// Scale the syntax loss by (1 + that mean), coupling fidelity to the
    /// differentiable term.
    ScaledCe,
}

/// Loss term weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda_load: f64,
    pub lambda_frob: f64,
    pub lambda_count: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.5,
            lambda2: 0.7,
            lambda3: 0.3,
            lambda_load: 0.1,
            lambda_frob: 1e-4,
            lambda_count: 0.1,
        }
    }
}

/// One step's loss components. `total` always equals
/// `syntax + semantic + λ2·router_kl + λ3·util + λ_load·load
/// + λ_frob·frobenius + λ_count·count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub syntax: f64,
    pub semantic: f64,
    pub router_kl: f64,
    pub load: f64,
    pub util: f64,
    pub frobenius: f64,
    pub count: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    /// The arithmetic identity every step must satisfy.
    pub fn identity_residual(&self) -> f64 {
        let w = &self.weights;
        let rhs = self.syntax
            + self.semantic
            + w.lambda2 * self.router_kl
            + w.lambda3 * self.util
            + w.lambda_load * self.load
            + w.lambda_frob * self.frobenius
            + w.lambda_count * self.count;
        (self.total - rhs).abs()
    }

    /// First non-finite component name, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        for (name, v) in [
            ("syntax", self.syntax),
            ("semantic", self.semantic),
            ("router_kl", self.router_kl),
            ("load", self.load),
            ("util", self.util),
            ("frobenius", self.frobenius),
            ("count", self.count),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Some(name);
            }
        }
        None
    }
}

/// Windowed-utilization regularizer: `λ1 · Σ_i (u_i − 1/N)²`. A statistic of
/// routing counts, not of the current parameters — it carries no gradient.
pub fn utilization_regularizer(u: &[f64], lambda1: f64) -> f64 {
    assert!(!u.is_empty());
    let n = u.len() as f64;
    lambda1 * u.iter().map(|&x| (x - 1.0 / n).powi(2)).sum::<f64>()
}

/// Mean hinge gap max(0, τ − IoU) over a batch of rendered decodes.
/// Failed executions enter as IoU = 0.
pub fn semantic_gap(ious: &[f64], tau: f64) -> f64 {
    if ious.is_empty() {
        return 0.0;
    }
    ious.iter().map(|&i| (tau - i).max(0.0)).sum::<f64>() / ious.len() as f64
}

/// Assemble the objective. Returns the differentiable node to backprop
/// (syntax — scaled in [`SemanticMode::ScaledCe`] — plus the weighted KL,
/// load, Frobenius, and count terms) together with the full numeric
/// breakdown; the utilization term and the log-only semantic gap join the
/// breakdown as constants.
#[allow(clippy::too_many_arguments)]
pub fn compose_loss(
    syntax: &Value,
    router_kl: &Value,
    load: &Value,
    frobenius: &Value,
    count: &Value,
    gap: f64,
    util: f64,
    mode: SemanticMode,
    weights: LossWeights,
) -> Result<(Value, LossBreakdown)> {
    let syntax_val = syntax.item();
    let semantic = match mode {
        SemanticMode::LogOnly => gap,
        SemanticMode::ScaledCe => syntax_val * gap,
    };
    let differentiable_syntax = match mode {
        SemanticMode::LogOnly => syntax.clone(),
        SemanticMode::ScaledCe => syntax.scale(1.0 + gap),
    };
    let objective = differentiable_syntax
        .add(&router_kl.scale(weights.lambda2))
        .add(&load.scale(weights.lambda_load))
        .add(&frobenius.scale(weights.lambda_frob))
        .add(&count.scale(weights.lambda_count));
    let constant_part = weights.lambda3 * util
        + match mode {
            SemanticMode::LogOnly => gap,
            // scaled_ce already folds the semantic term into the objective
            SemanticMode::ScaledCe => 0.0,
        };
    let breakdown = LossBreakdown {
        syntax: syntax_val,
        semantic,
        router_kl: router_kl.item(),
        load: load.item(),
        util,
        frobenius: frobenius.item(),
        count: count.item(),
        total: objective.item() + constant_part,
        weights,
    };
    if let Some(name) = breakdown.first_non_finite() {
        return Err(Error::Numerical {
            node: name.to_string(),
            detail: "non-finite loss component".to_string(),
        });
    }
    debug_assert!(breakdown.identity_residual() < 1e-10);
    Ok((objective, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Graph;

    fn scalars(g: &Graph, vals: [f64; 4]) -> (Value, Value, Value, Value) {
        (
            g.scalar(vals[0]),
            g.scalar(vals[1]),
            g.scalar(vals[2]),
            g.scalar(vals[3]),
        )
    }

    #[test]
    fn util_closed_forms() {
        assert_eq!(utilization_regularizer(&[0.25; 4], 0.5), 0.0);
        assert!((utilization_regularizer(&[1.0, 0.0], 0.5) - 0.25).abs() < 1e-15);
        let v = utilization_regularizer(&[0.4, 0.3, 0.2, 0.1], 0.5);
        assert!((v - 0.025).abs() < 1e-9);
    }

    #[test]
    fn semantic_gap_closed_forms() {
        assert_eq!(semantic_gap(&[1.0, 1.0, 1.0], 0.85), 0.0);
        assert!((semantic_gap(&[0.0, 0.0], 0.85) - 0.85).abs() < 1e-15);
        assert!((semantic_gap(&[0.9, 0.5], 0.85) - 0.175).abs() < 1e-12);
    }

    #[test]
    fn compose_primary_only() {
        let g = Graph::eval();
        let (s, k, l, f) = scalars(&g, [1.3, 0.7, 0.4, 2.0]);
        let w = LossWeights {
            lambda2: 0.0,
            lambda3: 0.0,
            lambda_load: 0.0,
            lambda_frob: 0.0,
            ..LossWeights::default()
        };
        let (_, b) =
            compose_loss(&s, &k, &l, &f, &g.scalar(0.0), 0.2, 0.5, SemanticMode::LogOnly, w).unwrap();
        assert!((b.total - (b.syntax + b.semantic)).abs() < 1e-12);
        assert!((b.total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn compose_weighted_fixture() {
        // syntax 1.0, router_kl 0.2, util 0.05, others 0 → 1.0 + 0.14 + 0.015
        let g = Graph::eval();
        let (s, k, l, f) = scalars(&g, [1.0, 0.2, 0.0, 0.0]);
        let (_, b) = compose_loss(
            &s,
            &k,
            &l,
            &f,
            &g.scalar(0.0),
            0.0,
            0.05,
            SemanticMode::LogOnly,
            LossWeights {
                lambda_load: 0.0,
                lambda_frob: 0.0,
                ..LossWeights::default()
            },
        )
        .unwrap();
        assert!((b.total - 1.155).abs() < 1e-12);
        assert!(b.identity_residual() < 1e-10);
    }

    #[test]
    fn identity_holds_in_both_modes() {
        let g = Graph::eval();
        let (s, k, l, f) = scalars(&g, [0.9, 0.3, 0.12, 5.0]);
        for mode in [SemanticMode::LogOnly, SemanticMode::ScaledCe] {
            let (obj, b) =
                compose_loss(&s, &k, &l, &f, &g.scalar(0.0), 0.4, 0.07, mode, LossWeights::default())
                    .unwrap();
            assert!(b.identity_residual() < 1e-10, "{mode:?}");
            assert!(obj.item().is_finite());
        }
        // scaled_ce folds the semantic term into the differentiable objective
        let (obj, b) = compose_loss(
            &s, &k, &l, &f, &g.scalar(0.0), 0.4, 0.0, SemanticMode::ScaledCe, LossWeights::default(),
        )
        .unwrap();
        assert!((b.semantic - 0.9 * 0.4).abs() < 1e-12);
        assert!((obj.item() - b.total).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_weighted_component_sum() {
        // total = syntax + λ2·kl + λ_load·load + λ_frob·frob, each a function
        // of one trainable scalar; d total / d p must be the weighted sum.
        let g = Graph::new();
        let mut store = crate::model::ParamStore::new();
        store.insert("p", 1, 1, vec![0.7]);
        let p = store.bind(&g, "p");
        let syntax = p.mul(&p); // d = 2p
        let kl = p.scale(3.0); // d = 3
        let load = p.mul(&p).mul(&p); // d = 3p²
        let frob = p.scale(-1.0); // d = -1
        let w = LossWeights::default();
        let count = p.add_scalar(-2.0); // d = 1 through the squared error below
        let count_sq = count.mul(&count); // d = 2(p-2)
        let (obj, _) = compose_loss(
            &syntax, &kl, &load, &frob, &count_sq, 0.0, 0.0, SemanticMode::LogOnly, w,
        )
        .unwrap();
        let grads = g.backward(&obj).unwrap();
        let expected = 2.0 * 0.7
            + w.lambda2 * 3.0
            + w.lambda_load * 3.0 * 0.49
            + w.lambda_frob * -1.0
            + w.lambda_count * 2.0 * (0.7 - 2.0);
        assert!((grads["p"][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_component_rejected() {
        let g = Graph::eval();
        let (s, k, l, f) = scalars(&g, [f64::NAN, 0.0, 0.0, 0.0]);
        let res = compose_loss(
            &s, &k, &l, &f, &g.scalar(0.0), 0.0, 0.0, SemanticMode::LogOnly, LossWeights::default(),
        );
        match res {
            Err(err) => assert!(err.to_string().contains("syntax")),
            Ok(_) => panic!("non-finite syntax accepted"),
        }
    }
}
