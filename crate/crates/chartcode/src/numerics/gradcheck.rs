//! Central finite-difference gradient oracle.
//!
//! This deliberately knows nothing about the autodiff tape: it re-evaluates a
//! black-box scalar function under parameter perturbations. Tests use it to
//! cross-check every analytic gradient path.

use std::collections::HashMap;

use crate::numerics::GradMap;

pub type ParamVals = HashMap<String, Vec<f64>>;

/// Central finite differences: `(f(x+h) - f(x-h)) / 2h` per parameter entry.
pub fn finite_diff_grad<F>(params: &ParamVals, f: F, h: f64) -> GradMap
where
    F: Fn(&ParamVals) -> f64,
{
    let mut out = GradMap::new();
    let mut work = params.clone();
    let names: Vec<String> = params.keys().cloned().collect();
    for name in names {
        let len = params[&name].len();
        let mut g = vec![0.0; len];
        for i in 0..len {
            let orig = params[&name][i];
            work.get_mut(&name).unwrap()[i] = orig + h;
            let fp = f(&work);
            work.get_mut(&name).unwrap()[i] = orig - h;
            let fm = f(&work);
            work.get_mut(&name).unwrap()[i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        out.insert(name, g);
    }
    out
}

/// Largest violation of `|a - b| <= abs_tol + rel_tol * max(|a|, |b|)` across
/// two gradient maps; `None` when everything agrees.
pub fn max_violation(
    analytic: &GradMap,
    numeric: &GradMap,
    rel_tol: f64,
    abs_tol: f64,
) -> Option<(String, usize, f64, f64)> {
    let mut worst: Option<(String, usize, f64, f64)> = None;
    let mut worst_excess = 0.0;
    for (name, num) in numeric {
        let ana = analytic
            .get(name)
            .cloned()
            .unwrap_or_else(|| vec![0.0; num.len()]);
        for i in 0..num.len() {
            let diff = (ana[i] - num[i]).abs();
            let allow = abs_tol + rel_tol * ana[i].abs().max(num[i].abs());
            if diff > allow && diff - allow > worst_excess {
                worst_excess = diff - allow;
                worst = Some((name.clone(), i, ana[i], num[i]));
            }
        }
    }
    worst
}
