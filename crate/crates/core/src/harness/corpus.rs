//! On-disk corpora: raw little-endian `f64` feature files plus a
//! tab-separated manifest.
//!
//! ```text
//! # earlyexit-manifest v1 split=train
//! # id  path  frames  feature_dim  transcript  sha256
//! train-00000  feats/train-00000.f64  31  16  bad cafe  9f86d0...
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MANIFEST_MAGIC: &str = "# earlyexit-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T × feature_dim`
    pub features: Tensor,
    /// Space-separated reference words.
    pub text: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub utterances: Vec<Utterance>,
    /// SHA-256 of the manifest bytes.
    pub manifest_checksum: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.utterances.first().map(|u| u.features.cols())
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(|u| u.features.rows()).sum()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn feature_bytes(t: &Tensor) -> Vec<u8> {
    t.to_le_bytes()
}

/// Writes `utterances` under `dir` (features in `dir/feats/`) and returns the
/// corpus as it would be ingested.
pub fn write_corpus(dir: &Path, split: Split, utterances: Vec<Utterance>) -> Result<Corpus> {
    let feats = dir.join("feats");
    fs::create_dir_all(&feats).map_err(|e| Error::io(&feats, e))?;
    let mut manifest = format!("{MANIFEST_MAGIC} split={split}\n# id\tpath\tframes\tfeature_dim\ttranscript\tsha256\n");
    for u in &utterances {
        if u.id.contains(['\t', '\n', '/']) || u.text.contains(['\t', '\n']) {
            return Err(Error::Contract(format!("utterance {:?} has characters the manifest cannot hold", u.id)));
        }
        let rel = format!("feats/{}.f64", u.id);
        let bytes = feature_bytes(&u.features);
        let path = dir.join(&rel);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            u.id,
            rel,
            u.features.rows(),
            u.features.cols(),
            u.text,
            sha256_hex(&bytes)
        ));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, &manifest).map_err(|e| Error::io(&path, e))?;
    Ok(Corpus {
        split,
        utterances,
        manifest_checksum: sha256_hex(manifest.as_bytes()),
    })
}

/// Reads and validates a manifest and every feature file it references.
pub fn ingest(manifest_path: impl AsRef<Path>) -> Result<Corpus> {
    let manifest_path = manifest_path.as_ref();
    if !manifest_path.is_file() {
        return Err(Error::MissingFile {
            path: manifest_path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let malformed = |line: usize, reason: String| Error::MalformedManifest {
        path: manifest_path.to_path_buf(),
        line,
        reason,
    };

    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty manifest".into()))?;
    let split = first
        .strip_prefix(MANIFEST_MAGIC)
        .and_then(|r| r.trim().strip_prefix("split="))
        .ok_or_else(|| malformed(1, format!("bad header {first:?}")))?
        .parse::<Split>()
        .map_err(|e| malformed(1, e.to_string()))?;

    let mut utterances = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, rel, frames, dim, transcript, checksum] = cols[..] else {
            return Err(malformed(lineno, format!("expected 6 columns, got {}", cols.len())));
        };
        let frames: usize = frames
            .parse()
            .map_err(|_| malformed(lineno, format!("bad frame count {frames:?}")))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| malformed(lineno, format!("bad feature_dim {dim:?}")))?;
        if frames == 0 || dim == 0 {
            return Err(malformed(lineno, "empty feature matrix".into()));
        }
        let path: PathBuf = base.join(rel);
        if !path.is_file() {
            return Err(Error::MissingFile { path });
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let actual = sha256_hex(&bytes);
        if actual != checksum {
            return Err(Error::ChecksumMismatch {
                path,
                expected: checksum.to_string(),
                actual,
            });
        }
        if bytes.len() % 8 != 0 || bytes.len() / 8 != frames * dim {
            return Err(Error::ShapeMismatch {
                path,
                expected: frames * dim,
                actual: bytes.len() / 8,
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        utterances.push(Utterance {
            id: id.to_string(),
            features: Tensor::new(&[frames, dim], values)?,
            text: transcript.to_string(),
        });
    }
    if utterances.is_empty() {
        return Err(malformed(1, "manifest lists no utterances".into()));
    }
    Ok(Corpus {
        split,
        utterances,
        manifest_checksum: sha256_hex(text.as_bytes()),
    })
}

/// Loads `dir/<split>/manifest.tsv`.
pub fn ingest_split(dir: &Path, split: Split) -> Result<Corpus> {
    ingest(dir.join(split.as_str()).join(MANIFEST_FILE))
}
