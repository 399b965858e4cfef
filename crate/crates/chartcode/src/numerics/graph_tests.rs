//! Finite-difference checks for every differentiable op, plus the backward
//! contract tests.

use std::collections::HashMap;

use crate::numerics::gradcheck::{finite_diff_grad, max_violation, ParamVals};
use crate::numerics::{GradMap, Graph, Value};
use crate::rng::Rng;

const H: f64 = 1e-5;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-7;

fn rand_vals(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// Run a scalar-valued builder both through autodiff and finite differences.
fn check<F>(params: ParamVals, shapes: HashMap<String, (usize, usize)>, build: F)
where
    F: Fn(&Graph, &dyn Fn(&str) -> Value) -> Value,
{
    let eval = |vals: &ParamVals| -> f64 {
        let g = Graph::new();
        let bind = |name: &str| {
            let (r, c) = shapes[name];
            g.param(name, r, c, vals[name].clone(), true)
        };
        build(&g, &bind).item()
    };
    let analytic: GradMap = {
        let g = Graph::new();
        let bind = |name: &str| {
            let (r, c) = shapes[name];
            g.param(name, r, c, params[name].clone(), true)
        };
        let root = build(&g, &bind);
        g.backward(&root).unwrap()
    };
    let numeric = finite_diff_grad(&params, eval, H);
    if let Some((name, i, a, n)) = max_violation(&analytic, &numeric, REL, ABS) {
        panic!("gradient mismatch for {name}[{i}]: analytic {a} vs numeric {n}");
    }
}

fn one_param(name: &str, r: usize, c: usize, vals: Vec<f64>) -> (ParamVals, HashMap<String, (usize, usize)>) {
    let mut p = ParamVals::new();
    p.insert(name.to_string(), vals);
    let mut s = HashMap::new();
    s.insert(name.to_string(), (r, c));
    (p, s)
}

#[test]
fn square_at_three() {
    let g = Graph::new();
    let x = g.param("x", 1, 1, vec![3.0], true);
    let y = x.mul(&x);
    let grads = g.backward(&y).unwrap();
    assert!((grads["x"][0] - 6.0).abs() < 1e-12);
}

#[test]
fn constant_has_zero_grad() {
    let g = Graph::new();
    let x = g.param("x", 1, 1, vec![3.0], true);
    let c = g.scalar(5.0);
    let y = c.mul(&c).add(&x.mul(&g.scalar(0.0)));
    let grads = g.backward(&y).unwrap();
    assert_eq!(grads["x"][0], 0.0);
}

#[test]
fn unreachable_param_gets_zero_grad() {
    let g = Graph::new();
    let x = g.param("x", 1, 1, vec![3.0], true);
    let _unused = g.param("w", 2, 2, vec![1.0; 4], true);
    let y = x.mul(&x);
    let grads = g.backward(&y).unwrap();
    assert_eq!(grads["w"], vec![0.0; 4]);
}

#[test]
fn non_scalar_root_rejected() {
    let g = Graph::new();
    let x = g.param("x", 2, 1, vec![1.0, 2.0], true);
    assert!(g.backward(&x).is_err());
}

#[test]
fn matvec_sum_matches_fd() {
    let mut rng = Rng::from_seed(11);
    for trial in 0..20 {
        let mut rng = rng.child_idx("trial", trial);
        let mut p = ParamVals::new();
        p.insert("m".into(), rand_vals(&mut rng, 9, -1.0, 1.0));
        p.insert("v".into(), rand_vals(&mut rng, 3, -1.0, 1.0));
        let mut s = HashMap::new();
        s.insert("m".into(), (3, 3));
        s.insert("v".into(), (3, 1));
        check(p, s, |_, bind| bind("m").matmul(&bind("v")).sum());
    }
    let _ = &mut rng;
}

#[test]
fn elementwise_ops_match_fd() {
    let mut rng = Rng::from_seed(12);
    for trial in 0..20 {
        let mut r = rng.child_idx("t", trial);
        let (p, s) = one_param("x", 2, 3, rand_vals(&mut r, 6, 0.2, 2.0));
        check(p.clone(), s.clone(), |_, b| b("x").ln().sum());
        check(p.clone(), s.clone(), |_, b| b("x").exp().mean());
        check(p.clone(), s.clone(), |_, b| b("x").sqrt().sum());
        check(p.clone(), s.clone(), |_, b| b("x").recip().sum());
        check(p.clone(), s.clone(), |_, b| b("x").silu().sum());
        check(p.clone(), s.clone(), |_, b| b("x").softplus().sum());
        check(p.clone(), s.clone(), |_, b| {
            let x = b("x");
            x.mul(&x).sub(&x.scale(0.5)).add_scalar(1.0).sum()
        });
    }
    let _ = &mut rng;
}

#[test]
fn softmax_ops_match_fd() {
    let mut rng = Rng::from_seed(13);
    for trial in 0..20 {
        let mut r = rng.child_idx("t", trial);
        let (p, s) = one_param("x", 3, 4, rand_vals(&mut r, 12, -2.0, 2.0));
        // weighted sums so every softmax output contributes distinctly
        let w: Vec<f64> = (0..12).map(|i| 0.3 + 0.1 * i as f64).collect();
        let wc = w.clone();
        check(p.clone(), s.clone(), move |g, b| {
            let weights = g.constant(3, 4, w.clone());
            b("x").softmax_rows().mul(&weights).sum()
        });
        check(p.clone(), s.clone(), move |g, b| {
            let weights = g.constant(3, 4, wc.clone());
            b("x").log_softmax_rows().mul(&weights).sum()
        });
    }
    let _ = &mut rng;
}

#[test]
fn broadcast_ops_match_fd() {
    let mut rng = Rng::from_seed(14);
    for trial in 0..20 {
        let mut r = rng.child_idx("t", trial);
        let mut p = ParamVals::new();
        p.insert("x".into(), rand_vals(&mut r, 6, -1.0, 1.0));
        p.insert("row".into(), rand_vals(&mut r, 3, -1.0, 1.0));
        p.insert("col".into(), rand_vals(&mut r, 2, -1.0, 1.0));
        p.insert("s".into(), rand_vals(&mut r, 1, 0.5, 1.5));
        let mut sh = HashMap::new();
        sh.insert("x".into(), (2, 3));
        sh.insert("row".into(), (1, 3));
        sh.insert("col".into(), (2, 1));
        sh.insert("s".into(), (1, 1));
        check(p, sh, |_, b| {
            b("x")
                .add_row(&b("row"))
                .mul_row(&b("row"))
                .mul_col(&b("col"))
                .mul_scalar_value(&b("s"))
                .sum()
        });
    }
    let _ = &mut rng;
}

#[test]
fn structural_ops_match_fd() {
    let mut rng = Rng::from_seed(15);
    for trial in 0..20 {
        let mut r = rng.child_idx("t", trial);
        let mut p = ParamVals::new();
        p.insert("x".into(), rand_vals(&mut r, 12, -1.0, 1.0));
        p.insert("y".into(), rand_vals(&mut r, 8, -1.0, 1.0));
        let mut sh = HashMap::new();
        sh.insert("x".into(), (4, 3));
        sh.insert("y".into(), (4, 2));
        check(p.clone(), sh.clone(), |_, b| {
            // gather (with a duplicate) then scatter back into 5 rows
            b("x")
                .gather_rows(&[0, 2, 2, 3])
                .scatter_rows(&[1, 0, 3, 4], 5)
                .mul(&b("x").gather_rows(&[1, 1, 0, 2]).scatter_rows(&[0, 2, 3, 4], 5))
                .sum()
        });
        check(p.clone(), sh.clone(), |g, b| {
            let joined = g.concat_cols(&[b("x"), b("y")]);
            joined.slice_cols(1, 3).row_sum().mul(&joined.slice_cols(2, 1)).sum()
        });
        check(p.clone(), sh.clone(), |g, b| {
            let e = b("x").select_entry(2, 1);
            let pr = b("x").select_per_row(&[0, 2, 1, 0]);
            let st = g.stack_scalars(&[e.clone(), b("y").select_entry(3, 0)]);
            pr.sum().add(&st.mul(&st).sum()).add(&e)
        });
        check(p.clone(), sh.clone(), |_, b| {
            let a = b("x").row_sum(); // 4x1
            let c = b("y").slice_cols(0, 1); // 4x1
            let m = a.outer_add(&c); // 4x4
            m.mul(&m).mean()
        });
        check(p.clone(), sh.clone(), |_, b| {
            b("x").matmul_nt(&b("x")).row_mean().sum()
        });
    }
    let _ = &mut rng;
}

#[test]
fn softmax_properties() {
    let mut rng = Rng::from_seed(16);
    for _ in 0..50 {
        let logits = rand_vals(&mut rng, 8, -40.0, 40.0);
        let g = Graph::eval();
        let x = g.constant(2, 4, logits.clone());
        let y = x.softmax_rows();
        let d = y.data();
        for r in 0..2 {
            let row = &d[r * 4..(r + 1) * 4];
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // shift invariance
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.456).collect();
        let y2 = g.constant(2, 4, shifted).softmax_rows();
        let d2 = y2.data();
        for i in 0..8 {
            assert!((d[i] - d2[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn nan_in_forward_detected() {
    let g = Graph::new();
    let x = g.param("x", 1, 1, vec![-1.0], true);
    let y = x.ln(); // NaN
    assert!(y.check_finite("ln").is_err());
}

#[test]
fn param_bound_once_accumulates() {
    let g = Graph::new();
    let x = g.param("x", 1, 1, vec![2.0], true);
    let x2 = g.param("x", 1, 1, vec![999.0], true); // same node, value ignored
    assert_eq!(x2.item(), 2.0);
    let y = x.mul(&x2); // x^2
    let grads = g.backward(&y).unwrap();
    assert!((grads["x"][0] - 4.0).abs() < 1e-12);
}

#[test]
fn eval_graph_records_nothing() {
    let g = Graph::eval();
    let x = g.param("x", 1, 1, vec![2.0], true);
    let y = x.mul(&x);
    assert_eq!(y.item(), 4.0);
    let grads = g.backward(&y).unwrap();
    assert!(grads.is_empty() || grads.values().all(|v| v.is_empty()));
}
