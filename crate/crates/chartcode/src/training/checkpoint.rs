//! Binary checkpoints: a magic prefix, a versioned JSON header (format
//! version, config hash, model settings, tensor table), then raw
//! little-endian f64 tensor data in table order. Byte-identical for
//! identical weights and settings.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{LoraConfig, Model, ModelConfig, TrainMode};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CHARTCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config_hash: String,
    pub model: ModelConfig,
    pub mode: TrainMode,
    pub lora: LoraConfig,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(path: &Path, model: &Model, config_hash: &str, seed: u64) -> Result<()> {
    let tensors: Vec<TensorEntry> = model
        .store
        .iter()
        .map(|(name, p)| TensorEntry {
            name: name.to_string(),
            rows: p.rows,
            cols: p.cols,
            trainable: p.trainable,
        })
        .collect();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        model: model.cfg,
        mode: model.mode,
        lora: model.lora,
        seed,
        tensors,
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for entry in &header.tensors {
        for &v in model.store.get(&entry.name).data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Rebuild the model (same init path), then overwrite every tensor from the
/// file. Shapes and names must match the freshly built structure exactly.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::Serde(format!("checkpoint {}: {msg}", path.display()));
    if bytes.len() < MAGIC.len() + 12 || &bytes[..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(&format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + hlen {
        return Err(fail("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..20 + hlen])
        .map_err(|e| fail(&format!("header json: {e}")))?;
    let mut model = Model::new(header.model, header.mode, header.lora, header.seed)?;
    let mut cursor = 20 + hlen;
    for entry in &header.tensors {
        let p = model
            .store
            .try_get(&entry.name)
            .ok_or_else(|| fail(&format!("unknown tensor {}", entry.name)))?;
        if p.rows != entry.rows || p.cols != entry.cols {
            return Err(fail(&format!(
                "tensor {} shape {}x{} vs rebuilt {}x{}",
                entry.name, entry.rows, entry.cols, p.rows, p.cols
            )));
        }
        let count = entry.rows * entry.cols;
        let end = cursor + 8 * count;
        if bytes.len() < end {
            return Err(fail("truncated tensor data"));
        }
        let dst = model.store.get_mut(&entry.name);
        for (i, v) in dst.data.iter_mut().enumerate() {
            let off = cursor + 8 * i;
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        }
        dst.trainable = entry.trainable;
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::ChartType;
    use crate::numerics::Graph;
    use crate::rng::Rng;

    fn small() -> Model {
        let cfg = ModelConfig {
            img: 16,
            patch: 8,
            d: 16,
            heads: 2,
            experts: 4,
            capacity: 8,
            max_len: 24,
            ..ModelConfig::default()
        };
        Model::new(cfg, TrainMode::MoeLora, LoraConfig { rank: 4, ..LoraConfig::default() }, 11)
            .unwrap()
    }

    #[test]
    fn round_trip_bit_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = small();
        // perturb so we do not just test the init path
        let mut r = Rng::from_seed(3);
        for v in model.store.get_mut("dec.out.w").data.iter_mut() {
            *v = r.normal(0.0, 0.3);
        }
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&p1, &model, "hash", 11).unwrap();
        save_checkpoint(&p2, &model, "hash", 11).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let (loaded, header) = load_checkpoint(&p1).unwrap();
        assert_eq!(header.format_version, FORMAT_VERSION);
        assert_eq!(header.config_hash, "hash");
        for (name, p) in model.store.iter() {
            let q = loaded.store.get(name);
            assert_eq!(p.data, q.data, "{name}");
            assert_eq!(p.trainable, q.trainable, "{name}");
        }
        // forward equality
        let img = vec![0.5; 3 * 16 * 16];
        let run = |m: &Model| {
            let g = Graph::eval();
            m.forward_sample(&g, &img, ChartType::Bar, &[3, 6, 4], false, &mut Rng::from_seed(0))
                .unwrap()
                .logits
                .data()
                .to_vec()
        };
        assert_eq!(run(&model), run(&loaded));
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        std::fs::write(&p, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&p).is_err());

        let model = small();
        save_checkpoint(&p, &model, "h", 11).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 9);
        std::fs::write(&p, bytes).unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
