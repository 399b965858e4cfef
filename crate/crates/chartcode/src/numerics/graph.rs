//! Reverse-mode autodiff on a dynamically recorded tape.
//!
//! All tensors are row-major f64 matrices (`rows x cols`); vectors are `n x 1`
//! or `1 x n`, scalars `1 x 1`. A [`Graph`] records one forward computation;
//! [`Graph::backward`] replays it in reverse and returns gradients keyed by
//! parameter name. The graph is dropped after each step — nothing is reused
//! across steps, which keeps ownership simple and runs bit-reproducible.
//!
//! Nodes created while `recording` is off (evaluation mode) store no backward
//! closures, so forward-only passes carry no tape overhead.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::la;

/// Gradients keyed by parameter name, flat row-major values.
pub type GradMap = HashMap<String, Vec<f64>>;

type BackFn = Box<dyn Fn(&[f64], &mut [Vec<f64>])>;

struct Node {
    rows: usize,
    cols: usize,
    values: Rc<Vec<f64>>,
    op: &'static str,
    back: Option<BackFn>,
    needs_grad: bool,
}

struct GraphInner {
    nodes: Vec<Node>,
    recording: bool,
    /// name -> node index, so a parameter used twice binds to one leaf and
    /// its gradient accumulates.
    params: HashMap<String, usize>,
    param_order: Vec<String>,
}

/// A recorded computation graph. Cloning is cheap (shared tape).
#[derive(Clone)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// Handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Value {
    graph: Graph,
    idx: usize,
    rows: usize,
    cols: usize,
    needs_grad: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::with_recording(true)
    }

    /// An evaluation-mode graph: forward values only, no backward closures.
    pub fn eval() -> Self {
        Self::with_recording(false)
    }

    fn with_recording(recording: bool) -> Self {
        Graph {
            inner: Rc::new(RefCell::new(GraphInner {
                nodes: Vec::new(),
                recording,
                params: HashMap::new(),
                param_order: Vec::new(),
            })),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.inner.borrow().recording
    }

    /// Number of scalars currently held by forward values (activation
    /// footprint of this graph).
    pub fn activation_scalars(&self) -> usize {
        self.inner
            .borrow()
            .nodes
            .iter()
            .map(|n| n.values.len())
            .sum()
    }

    fn push(
        &self,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        op: &'static str,
        needs_grad: bool,
        back: Option<BackFn>,
    ) -> Value {
        debug_assert_eq!(values.len(), rows * cols, "shape mismatch in `{op}`");
        let mut inner = self.inner.borrow_mut();
        let needs_grad = needs_grad && inner.recording;
        let back = if needs_grad { back } else { None };
        inner.nodes.push(Node {
            rows,
            cols,
            values: Rc::new(values),
            op,
            back,
            needs_grad,
        });
        Value {
            graph: self.clone(),
            idx: inner.nodes.len() - 1,
            rows,
            cols,
            needs_grad,
        }
    }

    /// A constant (no gradient flows into it).
    pub fn constant(&self, rows: usize, cols: usize, values: Vec<f64>) -> Value {
        self.push(rows, cols, values, "const", false, None)
    }

    pub fn scalar(&self, v: f64) -> Value {
        self.constant(1, 1, vec![v])
    }

    /// Bind a named parameter as a leaf. Repeated binds of the same name
    /// return the same node.
    pub fn param(
        &self,
        name: &str,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        trainable: bool,
    ) -> Value {
        if let Some(&idx) = self.inner.borrow().params.get(name) {
            let inner = self.inner.borrow();
            let n = &inner.nodes[idx];
            return Value {
                graph: self.clone(),
                idx,
                rows: n.rows,
                cols: n.cols,
                needs_grad: n.needs_grad,
            };
        }
        let v = self.push(rows, cols, values, "param", trainable, None);
        let mut inner = self.inner.borrow_mut();
        inner.params.insert(name.to_string(), v.idx);
        inner.param_order.push(name.to_string());
        v
    }

    /// Stack scalar nodes into a `k x 1` column.
    pub fn stack_scalars(&self, scalars: &[Value]) -> Value {
        let k = scalars.len();
        assert!(k > 0);
        let mut vals = Vec::with_capacity(k);
        for s in scalars {
            assert!(s.rows == 1 && s.cols == 1, "stack_scalars: non-scalar input");
            vals.push(s.item());
        }
        let idxs: Vec<usize> = scalars.iter().map(|s| s.idx).collect();
        let ng = scalars.iter().any(|s| s.needs_grad);
        self.push(
            k,
            1,
            vals,
            "stack_scalars",
            ng,
            Some(Box::new(move |g, grads| {
                for (i, &pi) in idxs.iter().enumerate() {
                    if !grads[pi].is_empty() {
                        grads[pi][0] += g[i];
                    }
                }
            })),
        )
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&self, parts: &[Value]) -> Value {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let total: usize = parts.iter().map(|p| p.cols).sum();
        let mut vals = vec![0.0; rows * total];
        let mut offsets = Vec::with_capacity(parts.len());
        let mut off = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "concat_cols: row mismatch");
            let data = p.data();
            for r in 0..rows {
                vals[r * total + off..r * total + off + p.cols]
                    .copy_from_slice(&data[r * p.cols..(r + 1) * p.cols]);
            }
            offsets.push((p.idx, off, p.cols));
            off += p.cols;
        }
        let ng = parts.iter().any(|p| p.needs_grad);
        self.push(
            rows,
            total,
            vals,
            "concat_cols",
            ng,
            Some(Box::new(move |g, grads| {
                for &(pi, off, cols) in &offsets {
                    if grads[pi].is_empty() {
                        continue;
                    }
                    for r in 0..rows {
                        for c in 0..cols {
                            grads[pi][r * cols + c] += g[r * total + off + c];
                        }
                    }
                }
            })),
        )
    }

    /// Reverse pass from a scalar root. Returns gradients for every named
    /// parameter bound to this graph (zero vectors for trainable parameters
    /// the root does not reach).
    pub fn backward(&self, root: &Value) -> Result<GradMap> {
        if root.rows != 1 || root.cols != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got {}x{}",
                root.rows, root.cols
            )));
        }
        let inner = self.inner.borrow();
        let mut grads: Vec<Vec<f64>> = inner
            .nodes
            .iter()
            .map(|n| {
                if n.needs_grad {
                    vec![0.0; n.values.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        if grads[root.idx].is_empty() {
            grads[root.idx] = vec![0.0];
        }
        grads[root.idx][0] = 1.0;
        for i in (0..=root.idx).rev() {
            let node = &inner.nodes[i];
            if grads[i].is_empty() {
                continue;
            }
            if let Some(bad) = grads[i].iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    node: format!("{}#{}", node.op, i),
                    detail: format!("non-finite gradient at flat index {bad}"),
                });
            }
            if let Some(back) = &node.back {
                let g = std::mem::take(&mut grads[i]);
                back(&g, &mut grads);
                grads[i] = g;
            }
        }
        let mut out = GradMap::new();
        for name in &inner.param_order {
            let idx = inner.params[name];
            if inner.nodes[idx].needs_grad {
                out.insert(name.clone(), std::mem::take(&mut grads[idx]));
            }
        }
        Ok(out)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Value {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn data(&self) -> Rc<Vec<f64>> {
        self.graph.inner.borrow().nodes[self.idx].values.clone()
    }

    /// Extract a 1x1 node's value.
    pub fn item(&self) -> f64 {
        debug_assert!(self.rows == 1 && self.cols == 1);
        self.data()[0]
    }

    /// Error if any forward value is non-finite.
    pub fn check_finite(&self, label: &str) -> Result<()> {
        let data = self.data();
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                node: label.to_string(),
                detail: format!("non-finite forward value at flat index {bad}"),
            });
        }
        Ok(())
    }

    fn same_graph(&self, other: &Value) {
        debug_assert!(
            Rc::ptr_eq(&self.graph.inner, &other.graph.inner),
            "values belong to different graphs"
        );
    }

    fn unary(
        &self,
        op: &'static str,
        out: Vec<f64>,
        // local gradient: d out[i] / d in[i]
        dlocal: Vec<f64>,
    ) -> Value {
        let pi = self.idx;
        self.graph.push(
            self.rows,
            self.cols,
            out,
            op,
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for (i, &gv) in g.iter().enumerate() {
                    grads[pi][i] += gv * dlocal[i];
                }
            })),
        )
    }

    pub fn add(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add shape");
        let a = self.data();
        let b = other.data();
        let out: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
        let (pa, pb) = (self.idx, other.idx);
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "add",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    la::axpy(1.0, g, &mut grads[pa]);
                }
                if !grads[pb].is_empty() {
                    la::axpy(1.0, g, &mut grads[pb]);
                }
            })),
        )
    }

    pub fn sub(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub shape");
        let a = self.data();
        let b = other.data();
        let out: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        let (pa, pb) = (self.idx, other.idx);
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "sub",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    la::axpy(1.0, g, &mut grads[pa]);
                }
                if !grads[pb].is_empty() {
                    la::axpy(-1.0, g, &mut grads[pb]);
                }
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "mul shape");
        let a = self.data();
        let b = other.data();
        let out: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let (pa, pb) = (self.idx, other.idx);
        let (ac, bc) = (a.clone(), b.clone());
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "mul",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    for (i, &gv) in g.iter().enumerate() {
                        grads[pa][i] += gv * bc[i];
                    }
                }
                if !grads[pb].is_empty() {
                    for (i, &gv) in g.iter().enumerate() {
                        grads[pb][i] += gv * ac[i];
                    }
                }
            })),
        )
    }

    pub fn scale(&self, c: f64) -> Value {
        let out: Vec<f64> = self.data().iter().map(|v| v * c).collect();
        let pi = self.idx;
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "scale",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pi].is_empty() {
                    la::axpy(c, g, &mut grads[pi]);
                }
            })),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Value {
        let out: Vec<f64> = self.data().iter().map(|v| v + c).collect();
        let pi = self.idx;
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "add_scalar",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pi].is_empty() {
                    la::axpy(1.0, g, &mut grads[pi]);
                }
            })),
        )
    }

    /// Broadcast-add a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&self, row: &Value) -> Value {
        self.same_graph(row);
        assert_eq!(row.rows, 1, "add_row: row must be 1 x n");
        assert_eq!(row.cols, self.cols, "add_row: width mismatch");
        let a = self.data();
        let b = row.data();
        let (m, n) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                out.push(a[r * n + c] + b[c]);
            }
        }
        let (pa, pb) = (self.idx, row.idx);
        self.graph.push(
            m,
            n,
            out,
            "add_row",
            self.needs_grad || row.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    la::axpy(1.0, g, &mut grads[pa]);
                }
                if !grads[pb].is_empty() {
                    for r in 0..m {
                        for c in 0..n {
                            grads[pb][c] += g[r * n + c];
                        }
                    }
                }
            })),
        )
    }

    /// Broadcast-multiply every row of `m x n` by a `1 x n` row.
    pub fn mul_row(&self, row: &Value) -> Value {
        self.same_graph(row);
        assert_eq!(row.rows, 1, "mul_row: row must be 1 x n");
        assert_eq!(row.cols, self.cols, "mul_row: width mismatch");
        let a = self.data();
        let b = row.data();
        let (m, n) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                out.push(a[r * n + c] * b[c]);
            }
        }
        let (pa, pb) = (self.idx, row.idx);
        let (ac, bc) = (a.clone(), b.clone());
        self.graph.push(
            m,
            n,
            out,
            "mul_row",
            self.needs_grad || row.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    for r in 0..m {
                        for c in 0..n {
                            grads[pa][r * n + c] += g[r * n + c] * bc[c];
                        }
                    }
                }
                if !grads[pb].is_empty() {
                    for r in 0..m {
                        for c in 0..n {
                            grads[pb][c] += g[r * n + c] * ac[r * n + c];
                        }
                    }
                }
            })),
        )
    }

    /// Broadcast-multiply every column of `m x n` by an `m x 1` column.
    pub fn mul_col(&self, col: &Value) -> Value {
        self.same_graph(col);
        assert_eq!(col.cols, 1, "mul_col: col must be m x 1");
        assert_eq!(col.rows, self.rows, "mul_col: height mismatch");
        let a = self.data();
        let b = col.data();
        let (m, n) = (self.rows, self.cols);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                out.push(a[r * n + c] * b[r]);
            }
        }
        let (pa, pb) = (self.idx, col.idx);
        let (ac, bc) = (a.clone(), b.clone());
        self.graph.push(
            m,
            n,
            out,
            "mul_col",
            self.needs_grad || col.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    for r in 0..m {
                        for c in 0..n {
                            grads[pa][r * n + c] += g[r * n + c] * bc[r];
                        }
                    }
                }
                if !grads[pb].is_empty() {
                    for r in 0..m {
                        let mut s = 0.0;
                        for c in 0..n {
                            s += g[r * n + c] * ac[r * n + c];
                        }
                        grads[pb][r] += s;
                    }
                }
            })),
        )
    }

    /// Multiply the whole matrix by a scalar node.
    pub fn mul_scalar_value(&self, s: &Value) -> Value {
        self.same_graph(s);
        assert!(s.rows == 1 && s.cols == 1, "mul_scalar_value: not a scalar");
        let a = self.data();
        let sv = s.item();
        let out: Vec<f64> = a.iter().map(|v| v * sv).collect();
        let (pa, ps) = (self.idx, s.idx);
        let ac = a.clone();
        self.graph.push(
            self.rows,
            self.cols,
            out,
            "mul_scalar_value",
            self.needs_grad || s.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    la::axpy(sv, g, &mut grads[pa]);
                }
                if !grads[ps].is_empty() {
                    let mut acc = 0.0;
                    for (i, &gv) in g.iter().enumerate() {
                        acc += gv * ac[i];
                    }
                    grads[ps][0] += acc;
                }
            })),
        )
    }

    /// Matrix product `self (m x k) * other (k x n)`.
    pub fn matmul(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!(self.cols, other.rows, "matmul inner dim");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let a = self.data();
        let b = other.data();
        let out = la::matmul(&a, &b, m, k, n);
        let (pa, pb) = (self.idx, other.idx);
        self.graph.push(
            m,
            n,
            out,
            "matmul",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    // dA += G * B^T : (m x n)(k x n)^T
                    la::matmul_nt_acc(g, &b, m, n, k, &mut grads[pa]);
                }
                if !grads[pb].is_empty() {
                    // dB += A^T * G
                    la::matmul_tn_acc(&a, g, k, m, n, &mut grads[pb]);
                }
            })),
        )
    }

    /// Matrix product with transposed right operand: `self (m x k) * other (n x k)^T`.
    pub fn matmul_nt(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!(self.cols, other.cols, "matmul_nt inner dim");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let a = self.data();
        let b = other.data();
        let out = la::matmul_nt(&a, &b, m, k, n);
        let (pa, pb) = (self.idx, other.idx);
        self.graph.push(
            m,
            n,
            out,
            "matmul_nt",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    // dA += G * B : (m x n)(n x k)
                    la::matmul_acc(g, &b, m, n, k, &mut grads[pa]);
                }
                if !grads[pb].is_empty() {
                    // dB += G^T * A : (n x m)(m x k)
                    la::matmul_tn_acc(g, &a, n, m, k, &mut grads[pb]);
                }
            })),
        )
    }

    pub fn sum(&self) -> Value {
        let s: f64 = self.data().iter().sum();
        let pi = self.idx;
        self.graph.push(
            1,
            1,
            vec![s],
            "sum",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pi].is_empty() {
                    let gv = g[0];
                    for v in grads[pi].iter_mut() {
                        *v += gv;
                    }
                }
            })),
        )
    }

    pub fn mean(&self) -> Value {
        let n = (self.rows * self.cols) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Row sums: `m x n -> m x 1`.
    pub fn row_sum(&self) -> Value {
        let (m, n) = (self.rows, self.cols);
        let a = self.data();
        let out: Vec<f64> = (0..m).map(|r| a[r * n..(r + 1) * n].iter().sum()).collect();
        let pi = self.idx;
        self.graph.push(
            m,
            1,
            out,
            "row_sum",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pi].is_empty() {
                    for r in 0..m {
                        let gv = g[r];
                        for c in 0..n {
                            grads[pi][r * n + c] += gv;
                        }
                    }
                }
            })),
        )
    }

    pub fn row_mean(&self) -> Value {
        let n = self.cols as f64;
        self.row_sum().scale(1.0 / n)
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&self) -> Value {
        let (m, n) = (self.rows, self.cols);
        let a = self.data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &a[r * n..(r + 1) * n];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (c, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                out[r * n + c] = e;
                s += e;
            }
            for c in 0..n {
                out[r * n + c] /= s;
            }
        }
        let pi = self.idx;
        let yc = out.clone();
        self.graph.push(
            m,
            n,
            out,
            "softmax_rows",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for r in 0..m {
                    let y = &yc[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: f64 = y.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    for c in 0..n {
                        grads[pi][r * n + c] += y[c] * (gr[c] - dot);
                    }
                }
            })),
        )
    }

    /// Numerically stable row-wise log-softmax.
    pub fn log_softmax_rows(&self) -> Value {
        let (m, n) = (self.rows, self.cols);
        let a = self.data();
        let mut out = vec![0.0; m * n];
        let mut soft = vec![0.0; m * n];
        for r in 0..m {
            let row = &a[r * n..(r + 1) * n];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
            for c in 0..n {
                out[r * n + c] = row[c] - lse;
                soft[r * n + c] = out[r * n + c].exp();
            }
        }
        let pi = self.idx;
        self.graph.push(
            m,
            n,
            out,
            "log_softmax_rows",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for r in 0..m {
                    let gr = &g[r * n..(r + 1) * n];
                    let gsum: f64 = gr.iter().sum();
                    for c in 0..n {
                        grads[pi][r * n + c] += gr[c] - soft[r * n + c] * gsum;
                    }
                }
            })),
        )
    }

    pub fn ln(&self) -> Value {
        let a = self.data();
        let out: Vec<f64> = a.iter().map(|v| v.ln()).collect();
        let dlocal: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
        self.unary("ln", out, dlocal)
    }

    pub fn exp(&self) -> Value {
        let out: Vec<f64> = self.data().iter().map(|v| v.exp()).collect();
        let dlocal = out.clone();
        self.unary("exp", out, dlocal)
    }

    pub fn sqrt(&self) -> Value {
        let out: Vec<f64> = self.data().iter().map(|v| v.sqrt()).collect();
        let dlocal: Vec<f64> = out.iter().map(|y| 0.5 / y).collect();
        self.unary("sqrt", out, dlocal)
    }

    pub fn recip(&self) -> Value {
        let a = self.data();
        let out: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
        let dlocal: Vec<f64> = a.iter().map(|v| -1.0 / (v * v)).collect();
        self.unary("recip", out, dlocal)
    }

    /// SiLU: `x * sigmoid(x)` — the smooth nonlinearity used by all FFNs.
    pub fn silu(&self) -> Value {
        let a = self.data();
        let mut out = Vec::with_capacity(a.len());
        let mut dlocal = Vec::with_capacity(a.len());
        for &x in a.iter() {
            let s = sigmoid(x);
            out.push(x * s);
            dlocal.push(s * (1.0 + x * (1.0 - s)));
        }
        self.unary("silu", out, dlocal)
    }

    /// Softplus: `ln(1 + e^x)`, computed stably.
    pub fn softplus(&self) -> Value {
        let a = self.data();
        let mut out = Vec::with_capacity(a.len());
        let mut dlocal = Vec::with_capacity(a.len());
        for &x in a.iter() {
            out.push(if x > 30.0 {
                x
            } else if x < -30.0 {
                x.exp()
            } else {
                x.exp().ln_1p()
            });
            dlocal.push(sigmoid(x));
        }
        self.unary("softplus", out, dlocal)
    }

    /// Gather rows by index (duplicates allowed): output `ids.len() x n`.
    pub fn gather_rows(&self, ids: &[usize]) -> Value {
        let n = self.cols;
        let a = self.data();
        let mut out = Vec::with_capacity(ids.len() * n);
        for &r in ids {
            assert!(r < self.rows, "gather_rows: index out of range");
            out.extend_from_slice(&a[r * n..(r + 1) * n]);
        }
        let pi = self.idx;
        let ids = ids.to_vec();
        self.graph.push(
            ids.len(),
            n,
            out,
            "gather_rows",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for (k, &r) in ids.iter().enumerate() {
                    for c in 0..n {
                        grads[pi][r * n + c] += g[k * n + c];
                    }
                }
            })),
        )
    }

    /// Scatter this `k x n` matrix into a zero `total_rows x n` matrix at the
    /// given row indices (rows must be distinct).
    pub fn scatter_rows(&self, rows: &[usize], total_rows: usize) -> Value {
        assert_eq!(rows.len(), self.rows, "scatter_rows: row count mismatch");
        let n = self.cols;
        let a = self.data();
        let mut out = vec![0.0; total_rows * n];
        for (k, &r) in rows.iter().enumerate() {
            assert!(r < total_rows, "scatter_rows: index out of range");
            out[r * n..(r + 1) * n].copy_from_slice(&a[k * n..(k + 1) * n]);
        }
        let pi = self.idx;
        let rows = rows.to_vec();
        self.graph.push(
            total_rows,
            n,
            out,
            "scatter_rows",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..n {
                        grads[pi][k * n + c] += g[r * n + c];
                    }
                }
            })),
        )
    }

    /// Pick one entry as a scalar node.
    pub fn select_entry(&self, r: usize, c: usize) -> Value {
        assert!(r < self.rows && c < self.cols, "select_entry out of range");
        let v = self.data()[r * self.cols + c];
        let pi = self.idx;
        let flat = r * self.cols + c;
        self.graph.push(
            1,
            1,
            vec![v],
            "select_entry",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pi].is_empty() {
                    grads[pi][flat] += g[0];
                }
            })),
        )
    }

    /// Pick one column index per row: output `m x 1`.
    pub fn select_per_row(&self, cols: &[usize]) -> Value {
        assert_eq!(cols.len(), self.rows, "select_per_row length");
        let n = self.cols;
        let a = self.data();
        let out: Vec<f64> = cols
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < n, "select_per_row: column out of range");
                a[r * n + c]
            })
            .collect();
        let pi = self.idx;
        let cols = cols.to_vec();
        self.graph.push(
            self.rows,
            1,
            out,
            "select_per_row",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for (r, &c) in cols.iter().enumerate() {
                    grads[pi][r * n + c] += g[r];
                }
            })),
        )
    }

    /// Column slice `[start, start+len)`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Value {
        assert!(start + len <= self.cols, "slice_cols out of range");
        let (m, n) = (self.rows, self.cols);
        let a = self.data();
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&a[r * n + start..r * n + start + len]);
        }
        let pi = self.idx;
        self.graph.push(
            m,
            len,
            out,
            "slice_cols",
            self.needs_grad,
            Some(Box::new(move |g, grads| {
                if grads[pi].is_empty() {
                    return;
                }
                for r in 0..m {
                    for c in 0..len {
                        grads[pi][r * n + start + c] += g[r * len + c];
                    }
                }
            })),
        )
    }

    /// Outer broadcast sum of two columns: `out[i][j] = self[i] + other[j]`
    /// (`m x 1` and `n x 1` -> `m x n`).
    pub fn outer_add(&self, other: &Value) -> Value {
        self.same_graph(other);
        assert_eq!(self.cols, 1, "outer_add: self must be m x 1");
        assert_eq!(other.cols, 1, "outer_add: other must be n x 1");
        let (m, n) = (self.rows, other.rows);
        let a = self.data();
        let b = other.data();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                out.push(a[r] + b[c]);
            }
        }
        let (pa, pb) = (self.idx, other.idx);
        self.graph.push(
            m,
            n,
            out,
            "outer_add",
            self.needs_grad || other.needs_grad,
            Some(Box::new(move |g, grads| {
                if !grads[pa].is_empty() {
                    for r in 0..m {
                        grads[pa][r] += g[r * n..(r + 1) * n].iter().sum::<f64>();
                    }
                }
                if !grads[pb].is_empty() {
                    for r in 0..m {
                        for c in 0..n {
                            grads[pb][c] += g[r * n + c];
                        }
                    }
                }
            })),
        )
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
