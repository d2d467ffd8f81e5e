//! Self-describing checkpoint container: a text manifest (config pairs,
//! vocabulary, tensor directory) followed by raw little-endian `f64`
//! payloads. No external serialization dependency; loading reproduces
//! forward outputs bit for bit.

use std::fs;
use std::path::Path;

use trajcast_core::data::Vocabulary;
use trajcast_core::model::Model;
use trajcast_core::train::TrainConfig;
use trajcast_core::Tensor;

use crate::config::{train_config_from_pairs, train_config_to_pairs, Pairs};
use crate::error::{CliError, Result};
use crate::formats::atomic_write;

const MAGIC: &[u8; 8] = b"TJCKPT01";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub model: Model,
    pub best_val_pr_auc: f64,
    /// Median gap between consecutive lab panels in the training split;
    /// default horizon for inference when no target time is given.
    pub median_panel_gap: f64,
    pub rng_seed: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut manifest = String::new();
        for (k, v) in train_config_to_pairs(&self.config) {
            manifest.push_str(&format!("config\t{k}\t{v}\n"));
        }
        manifest.push_str(&format!("meta\tbest_val_pr_auc\t{}\n", self.best_val_pr_auc));
        manifest.push_str(&format!("meta\tmedian_panel_gap\t{}\n", self.median_panel_gap));
        manifest.push_str(&format!("meta\trng_seed\t{}\n", self.rng_seed));
        for tok in self.vocab.input_tokens().iter().skip(3) {
            manifest.push_str(&format!("input_token\t{tok}\n"));
        }
        for tok in self.vocab.label_tokens() {
            manifest.push_str(&format!("label_token\t{tok}\n"));
        }

        let named = self.model.named_tensors();
        let mut payload: Vec<u8> = Vec::new();
        for (name, tensor) in &named {
            let offset = payload.len() / 8;
            let shape: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!(
                "tensor\t{name}\t{}\t{offset}\t{}\n",
                shape.join(","),
                tensor.numel()
            ));
            for &x in tensor.data() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }

        let mut bytes = Vec::with_capacity(20 + manifest.len() + 8 + payload.len());
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        bytes.extend_from_slice(manifest.as_bytes());
        bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&payload);
        atomic_write(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let fail = |detail: &str| CliError::Validation(format!("{}: {detail}", path.display()));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(fail("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(fail(&format!(
                "checkpoint format version {version} unsupported, expected {VERSION}"
            )));
        }
        let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let manifest_end = 20 + manifest_len;
        if bytes.len() < manifest_end + 8 {
            return Err(fail("truncated manifest"));
        }
        let manifest = std::str::from_utf8(&bytes[20..manifest_end])
            .map_err(|_| fail("manifest is not UTF-8"))?;
        let payload_len =
            u64::from_le_bytes(bytes[manifest_end..manifest_end + 8].try_into().unwrap())
                as usize;
        let payload = &bytes[manifest_end + 8..];
        if payload.len() != payload_len {
            return Err(fail("truncated payload"));
        }

        let mut config_pairs = Pairs::new();
        let mut input_tokens = Vec::new();
        let mut label_tokens = Vec::new();
        let mut tensors: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
        let mut best_val_pr_auc = 0.0f64;
        let mut median_panel_gap = 24.0f64;
        let mut rng_seed = 0u64;
        for (idx, line) in manifest.lines().enumerate() {
            let mut parts = line.split('\t');
            let kind = parts.next().unwrap_or_default();
            let err = || CliError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                detail: format!("malformed manifest line {line:?}"),
            };
            match kind {
                "config" => {
                    let k = parts.next().ok_or_else(err)?;
                    let v = parts.next().ok_or_else(err)?;
                    config_pairs.insert(k.to_string(), v.to_string());
                }
                "meta" => {
                    let k = parts.next().ok_or_else(err)?;
                    let v = parts.next().ok_or_else(err)?;
                    match k {
                        "best_val_pr_auc" => {
                            best_val_pr_auc = v.parse().map_err(|_| err())?
                        }
                        "median_panel_gap" => {
                            median_panel_gap = v.parse().map_err(|_| err())?
                        }
                        "rng_seed" => rng_seed = v.parse().map_err(|_| err())?,
                        _ => return Err(err()),
                    }
                }
                "input_token" => input_tokens.push(parts.next().ok_or_else(err)?.to_string()),
                "label_token" => label_tokens.push(parts.next().ok_or_else(err)?.to_string()),
                "tensor" => {
                    let name = parts.next().ok_or_else(err)?.to_string();
                    let shape: Vec<usize> = parts
                        .next()
                        .ok_or_else(err)?
                        .split(',')
                        .map(|d| d.parse().map_err(|_| err()))
                        .collect::<Result<_>>()?;
                    let offset: usize =
                        parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
                    let count: usize =
                        parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
                    tensors.push((name, shape, offset, count));
                }
                _ => return Err(err()),
            }
        }

        let vocab = Vocabulary::from_parts(input_tokens, label_tokens)
            .map_err(|e| fail(&e.to_string()))?;
        let config = train_config_from_pairs(TrainConfig::default(), &config_pairs)?;
        let mut model = Model::init(config.model_config(&vocab), 0)
            .map_err(|e| fail(&e.to_string()))?;

        let expected: Vec<String> =
            model.named_tensors().iter().map(|(n, _)| n.clone()).collect();
        let found: Vec<&String> = tensors.iter().map(|(n, _, _, _)| n).collect();
        for name in &expected {
            if !found.iter().any(|f| *f == name) {
                return Err(fail(&format!("checkpoint is missing tensor {name}")));
            }
        }
        if found.len() != expected.len() {
            return Err(fail("checkpoint holds unexpected extra tensors"));
        }
        for (name, shape, offset, count) in tensors {
            let start = offset * 8;
            let end = start + count * 8;
            if end > payload.len() {
                return Err(fail(&format!("tensor {name} payload out of bounds")));
            }
            let data: Vec<f64> = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| fail(&e.to_string()))?;
            model.set_tensor(&name, tensor).map_err(|e| fail(&e.to_string()))?;
        }

        Ok(Checkpoint { config, vocab, model, best_val_pr_auc, median_panel_gap, rng_seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajcast_core::synth::{generate, SynthConfig};
    use trajcast_core::train::prepare;

    fn small_checkpoint() -> Checkpoint {
        let trajs =
            generate(&SynthConfig { patients: 12, ..Default::default() }, 5).unwrap();
        let cfg = TrainConfig {
            embed_dim: 8,
            heads: 2,
            layers: 1,
            max_history: 10,
            decay_width: 2,
            ffn_dim: 16,
            augment_panels: true,
            ..TrainConfig::default()
        };
        let data = prepare(&trajs, &cfg).unwrap();
        let model = Model::init(cfg.model_config(&data.vocab), 5).unwrap();
        Checkpoint {
            config: cfg,
            vocab: data.vocab,
            model,
            best_val_pr_auc: 0.4321,
            median_panel_gap: 24.0,
            rng_seed: 5,
        }
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.vocab, ckpt.vocab);
        assert_eq!(loaded.model, ckpt.model);
        assert_eq!(loaded.best_val_pr_auc, ckpt.best_val_pr_auc);
        assert_eq!(loaded.rng_seed, ckpt.rng_seed);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8] = 9; // bump the version field
        fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert_eq!(err.exit_code(), crate::error::EXIT_VALIDATION);
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
