//! Named parameter storage shared by every model component.
//!
//! Parameters live here as plain f64 buffers between steps; each forward pass
//! binds them into a fresh graph. Trainability is a per-tensor flag so the
//! fine-tuning modes are just different flag assignments over one store.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::numerics::{Graph, Value};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        assert_eq!(data.len(), rows * cols, "param {name} shape");
        assert!(
            self.params
                .insert(
                    name.to_string(),
                    Param {
                        rows,
                        cols,
                        data,
                        trainable: true,
                    },
                )
                .is_none(),
            "duplicate param {name}"
        );
    }

    /// Xavier-uniform init seeded by the parameter's name.
    pub fn xavier(&mut self, rng: &Rng, name: &str, rows: usize, cols: usize) {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let mut r = rng.child(name);
        let data = (0..rows * cols).map(|_| r.uniform(-limit, limit)).collect();
        self.insert(name, rows, cols, data);
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, rows, cols, vec![0.0; rows * cols]);
    }

    pub fn ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, rows, cols, vec![1.0; rows * cols]);
    }

    pub fn get(&self, name: &str) -> &Param {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown param {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Param {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown param {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Bind a parameter into a graph as a (possibly trainable) leaf.
    pub fn bind(&self, g: &Graph, name: &str) -> Value {
        let p = self.get(name);
        g.param(name, p.rows, p.cols, p.data.clone(), p.trainable)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Set trainability from a predicate over parameter names.
    pub fn set_trainable(&mut self, pred: impl Fn(&str) -> bool) {
        for (name, p) in self.params.iter_mut() {
            p.trainable = pred(name);
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn trainable_scalar_count(&self) -> usize {
        self.params
            .values()
            .filter(|p| p.trainable)
            .map(|p| p.data.len())
            .sum()
    }

    /// Fraction of scalars that receive gradient updates.
    pub fn trainable_fraction(&self) -> f64 {
        assert!(self.scalar_count() > 0, "empty parameter store");
        self.trainable_scalar_count() as f64 / self.scalar_count() as f64
    }

    /// Mutable slices of all trainable tensors, for the optimizer.
    pub fn trainable_slices(&mut self) -> Vec<(&str, &mut [f64])> {
        self.params
            .iter_mut()
            .filter(|(_, p)| p.trainable)
            .map(|(k, p)| (k.as_str(), p.data.as_mut_slice()))
            .collect()
    }

    /// Sorted-name JSON snapshot (for adapter checkpoints and goldens).
    pub fn to_json_subset(&self, pred: impl Fn(&str) -> bool) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        let mut names: Vec<&String> = self.params.keys().filter(|n| pred(n)).collect();
        names.sort();
        for name in names {
            map.insert(
                name.clone(),
                serde_json::to_value(&self.params[name]).expect("param serializes"),
            );
        }
        serde_json::Value::Object(map)
    }

    pub fn load_json_subset(&mut self, json: &serde_json::Value) -> Result<()> {
        let obj = json
            .as_object()
            .ok_or_else(|| Error::Serde("parameter snapshot is not an object".into()))?;
        for (name, val) in obj {
            let incoming: Param = serde_json::from_value(val.clone())
                .map_err(|e| Error::Serde(format!("param {name}: {e}")))?;
            let existing = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::contract(format!("unknown param {name} in snapshot")))?;
            if existing.rows != incoming.rows || existing.cols != incoming.cols {
                return Err(Error::contract(format!(
                    "param {name} shape mismatch: {}x{} vs {}x{}",
                    existing.rows, existing.cols, incoming.rows, incoming.cols
                )));
            }
            existing.data = incoming.data;
            existing.trainable = incoming.trainable;
        }
        Ok(())
    }
}

/// Dense linear layer bound by name: `{prefix}.w` (in×out) and `{prefix}.b`.
pub fn init_linear(store: &mut ParamStore, rng: &Rng, prefix: &str, d_in: usize, d_out: usize) {
    store.xavier(rng, &format!("{prefix}.w"), d_in, d_out);
    store.zeros(&format!("{prefix}.b"), 1, d_out);
}

pub fn linear(store: &ParamStore, g: &Graph, prefix: &str, x: &Value) -> Value {
    let w = store.bind(g, &format!("{prefix}.w"));
    let b = store.bind(g, &format!("{prefix}.b"));
    x.matmul(&w).add_row(&b)
}

/// Sinusoidal positional-encoding table, rows = positions, cols = d.
pub fn sinusoidal_pe(positions: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; positions * d];
    for pos in 0..positions {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            pe[pos * d + 2 * i] = (pos as f64 * freq).sin();
            pe[pos * d + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    pe
}
