//! Checkpoint files.
//!
//! ```text
//! earlyexit-checkpoint v1\n
//! key=value\n ...                (config, one key per line)
//! params=<scalar count>\n
//! end-header\n
//! <params × f64 little-endian, registration order>
//! <u64 little-endian checksum>
//! ```
//!
//! The checksum is the first 8 bytes (little-endian) of SHA-256 over the
//! header and parameter bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{build_model, Model, ModelConfig};
use crate::ctc::Vocab;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "earlyexit-checkpoint";
const END_HEADER: &[u8] = b"end-header\n";

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn header(config: &ModelConfig) -> String {
    format!(
        "{MAGIC} v{CHECKPOINT_VERSION}\n\
         num_layers={}\nd_model={}\nnum_heads={}\nffn_dim={}\nfeature_dim={}\n\
         vocab={}\nbranch_layers={}\nd_ee={}\nbranch_heads={}\nseed={}\nparams={}\n",
        config.num_layers,
        config.d_model,
        config.num_heads,
        config.ffn_dim,
        config.feature_dim,
        config.vocab.symbols(),
        join(&config.branch_layers),
        config.d_ee,
        config.branch_heads,
        config.seed,
        config.parameter_count(),
    )
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header(model.config()).into_bytes();
    bytes.extend_from_slice(END_HEADER);
    for e in model.params().entries() {
        bytes.extend_from_slice(&e.tensor.to_le_bytes());
    }
    let sum = checksum(&bytes);
    bytes.extend_from_slice(&sum.to_le_bytes());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    load(path.as_ref(), None)
}

/// Loads a checkpoint and fails with [`Error::CheckpointMismatch`] unless it
/// was written for exactly `expected`.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Model> {
    load(path.as_ref(), Some(expected))
}

fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Model> {
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .windows(END_HEADER.len())
        .position(|w| w == END_HEADER)
        .ok_or_else(|| corrupt("no header terminator".into()))?;
    let header_text =
        std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8".into()))?;
    let mut lines = header_text.lines();
    let first = lines.next().unwrap_or_default();
    let version = first
        .strip_prefix(MAGIC)
        .and_then(|r| r.trim().strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| corrupt(format!("bad magic line {first:?}")))?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!(
            "format version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let (config, param_count) = parse_config(lines).map_err(corrupt)?;
    if let Some(want) = expected {
        if *want != config {
            return Err(Error::CheckpointMismatch {
                path: path.to_path_buf(),
                reason: format!(
                    "file holds {} layers / width {} / branches {:?} / d_ee {}, expected {} / {} / {:?} / {}",
                    config.num_layers,
                    config.d_model,
                    config.branch_layers,
                    config.d_ee,
                    want.num_layers,
                    want.d_model,
                    want.branch_layers,
                    want.d_ee
                ),
            });
        }
    }
    if param_count != config.parameter_count() {
        return Err(corrupt(format!(
            "header claims {param_count} parameters, config implies {}",
            config.parameter_count()
        )));
    }
    let body_start = split + END_HEADER.len();
    let want_len = body_start + param_count * 8 + 8;
    if bytes.len() != want_len {
        return Err(corrupt(format!("{} bytes, expected {want_len}", bytes.len())));
    }
    let (payload, tail) = bytes.split_at(want_len - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stored != checksum(payload) {
        return Err(corrupt("checksum mismatch".into()));
    }

    let mut model = build_model(&config)?;
    let mut values = payload[body_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(model)
}

fn parse_config<'a>(lines: impl Iterator<Item = &'a str>) -> std::result::Result<(ModelConfig, usize), String> {
    let mut kv = std::collections::HashMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("malformed header line {line:?}"))?;
        kv.insert(k.trim(), v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("header lacks {k}"));
    let num = |k: &str| -> std::result::Result<usize, String> {
        get(k)?.trim().parse().map_err(|_| format!("bad value for {k}"))
    };
    let branch_layers = {
        let raw = get("branch_layers")?.trim();
        if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',')
                .map(|s| s.trim().parse().map_err(|_| "bad branch_layers".to_string()))
                .collect::<std::result::Result<Vec<usize>, String>>()?
        }
    };
    let config = ModelConfig {
        num_layers: num("num_layers")?,
        d_model: num("d_model")?,
        num_heads: num("num_heads")?,
        ffn_dim: num("ffn_dim")?,
        feature_dim: num("feature_dim")?,
        vocab: Vocab::new(get("vocab")?).map_err(|e| e.to_string())?,
        branch_layers,
        d_ee: num("d_ee")?,
        branch_heads: num("branch_heads")?,
        seed: get("seed")?.trim().parse().map_err(|_| "bad seed".to_string())?,
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok((config, num("params")?))
}
