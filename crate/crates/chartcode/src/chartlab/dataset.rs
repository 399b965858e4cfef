//! Dataset generation and JSONL storage.
//!
//! A record pairs a chart spec with its canonical program tokens and the
//! PNG-encoded ground-truth raster. Generation is deterministic in the seed
//! and splits are stratified by chart type at 70/15/15.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::chartlab::raster::{rasterize_spec, Raster};
use crate::chartlab::spec::{emit_code, sample_spec, ChartSpec, ChartType, TypeMix};
use crate::rng::Rng;
use crate::{Error, Result};

/// One supervised example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub spec: ChartSpec,
    /// Canonical program tokens, unframed (no BOS/EOS).
    pub tokens: Vec<u16>,
    /// PNG bytes of the ground-truth raster, base64.
    pub raster_png: String,
}

impl DataRecord {
    pub fn from_spec(spec: ChartSpec) -> Result<Self> {
        let tokens = emit_code(&spec).tokens;
        let raster = rasterize_spec(&spec)
            .map_err(|e| Error::contract(format!("unrenderable spec: {e}")))?;
        let raster_png = base64::engine::general_purpose::STANDARD.encode(raster.to_png());
        Ok(DataRecord {
            spec,
            tokens,
            raster_png,
        })
    }

    pub fn raster(&self) -> Result<Raster> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&self.raster_png)
            .map_err(|e| Error::Serde(format!("raster base64: {e}")))?;
        Raster::from_png(&bytes).map_err(|e| Error::Serde(format!("raster png: {e}")))
    }
}

/// Per-split record counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// A generated corpus, already split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<DataRecord>,
    pub val: Vec<DataRecord>,
    pub test: Vec<DataRecord>,
}

impl Dataset {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
        }
    }

    /// Write `train.jsonl`, `val.jsonl` and `test.jsonl` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("val.jsonl"), &self.val)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            train: read_jsonl(&dir.join("train.jsonl"))?,
            val: read_jsonl(&dir.join("val.jsonl"))?,
            test: read_jsonl(&dir.join("test.jsonl"))?,
        })
    }
}

/// Largest-remainder split of `n` into 70/15/15.
fn split_sizes(n: usize) -> (usize, usize, usize) {
    let fracs = [0.70, 0.15, 0.15];
    let exact: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    (sizes[0], sizes[1], sizes[2])
}

/// Generate `n` records deterministically from `seed` and split them
/// 70/15/15, stratified so each chart type lands within one sample of its
/// exact split fraction.
pub fn gen_dataset(seed: u64, n: usize, mix: &TypeMix) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::contract("dataset size must be positive"));
    }
    mix.validate().map_err(Error::Contract)?;
    let root = Rng::from_seed(seed);
    let mut by_type: Vec<Vec<DataRecord>> = vec![Vec::new(); ChartType::ALL.len()];
    for i in 0..n {
        let mut rng = root.child_idx("record", i as u64);
        let spec = sample_spec(&mut rng, mix);
        let idx = spec.chart_type.index();
        by_type[idx].push(DataRecord::from_spec(spec)?);
    }
    let mut ds = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for bucket in by_type {
        let (tr, va, _te) = split_sizes(bucket.len());
        for (i, rec) in bucket.into_iter().enumerate() {
            if i < tr {
                ds.train.push(rec);
            } else if i < tr + va {
                ds.val.push(rec);
            } else {
                ds.test.push(rec);
            }
        }
    }
    // shuffle within each split so types interleave during training
    let mut shuffler = root.child("split-shuffle");
    shuffler.shuffle(&mut ds.train);
    shuffler.shuffle(&mut ds.val);
    shuffler.shuffle(&mut ds.test);
    Ok(ds)
}

pub fn write_jsonl(path: &Path, records: &[DataRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DataRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DataRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Serde(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::dsl::{parse, DSLProgram};
    use crate::chartlab::metrics::iou;

    #[test]
    fn split_sizes_largest_remainder() {
        assert_eq!(split_sizes(100), (70, 15, 15));
        assert_eq!(split_sizes(10), (7, 2, 1));
        assert_eq!(split_sizes(1), (1, 0, 0));
        assert_eq!(split_sizes(7), (5, 1, 1));
        for n in 0..200 {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert!((a as f64 - 0.70 * n as f64).abs() <= 1.0);
            assert!((b as f64 - 0.15 * n as f64).abs() <= 1.0);
            assert!((c as f64 - 0.15 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mix = TypeMix::default_mix();
        let a = gen_dataset(7, 40, &mix).unwrap();
        let b = gen_dataset(7, 40, &mix).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_is_stratified_by_type() {
        let mix = TypeMix::default_mix();
        let ds = gen_dataset(11, 400, &mix).unwrap();
        let count = |recs: &[DataRecord], t: ChartType| {
            recs.iter().filter(|r| r.spec.chart_type == t).count()
        };
        for t in ChartType::ALL {
            let total = count(&ds.train, t) + count(&ds.val, t) + count(&ds.test, t);
            assert!((count(&ds.train, t) as f64 - 0.70 * total as f64).abs() <= 1.0);
            assert!((count(&ds.val, t) as f64 - 0.15 * total as f64).abs() <= 1.0);
            assert!((count(&ds.test, t) as f64 - 0.15 * total as f64).abs() <= 1.0);
        }
        let c = ds.counts();
        assert_eq!(c.train + c.val + c.test, 400);
    }

    #[test]
    fn records_are_consistent() {
        let mix = TypeMix::default_mix();
        let ds = gen_dataset(13, 30, &mix).unwrap();
        for rec in ds.train.iter().chain(&ds.val).chain(&ds.test) {
            let prog = DSLProgram {
                tokens: rec.tokens.clone(),
            };
            assert_eq!(parse(&prog).unwrap(), rec.spec.scene());
            let stored = rec.raster().unwrap();
            let fresh = rasterize_spec(&rec.spec).unwrap();
            assert_eq!(iou(&stored, &fresh).unwrap(), 1.0);
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let mix = TypeMix::default_mix();
        let ds = gen_dataset(17, 20, &mix).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.write_dir(dir.path()).unwrap();
        let back = Dataset::read_dir(dir.path()).unwrap();
        assert_eq!(ds.train, back.train);
        assert_eq!(ds.val, back.val);
        assert_eq!(ds.test, back.test);
    }
}
