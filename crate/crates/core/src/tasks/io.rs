//! Dataset files.
//!
//! Layout of one split file: the magic `LRNNDS1`, a version byte, a u32 LE
//! header length, a `key=value` text header, then the u16 LE input matrix and
//! the u16 LE target matrix (ignore marker `0xFFFF`). A JSON manifest next to
//! the split files echoes the spec and records SHA-256 checksums.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, DatasetPair, Split, TaskKind, TaskSpec};
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"LRNNDS1";
pub const VERSION: u8 = 1;
pub const MANIFEST: &str = "manifest.json";

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format { format: "LRNNDS1", detail: detail.into() }
}

pub fn split_file_name(split: Split) -> String {
    format!("{split}.lrnnds")
}

pub fn encode_dataset(data: &Dataset) -> Vec<u8> {
    let s = &data.spec;
    let mut header = BTreeMap::new();
    header.insert("kind", s.kind.to_string());
    header.insert("vocab_size", s.vocab_size.to_string());
    header.insert("seq_len", s.seq_len.to_string());
    header.insert("num_train", s.num_train.to_string());
    header.insert("num_test", s.num_test.to_string());
    header.insert("seed", s.seed.to_string());
    header.insert("split", data.split.to_string());
    header.insert("rows", data.rows.to_string());
    header.insert("input_len", data.input_len.to_string());
    header.insert("target_len", data.target_len.to_string());
    if let Some(n) = s.group_n {
        header.insert("group_n", n.to_string());
    }
    if let Some(k) = s.copy_count {
        header.insert("copy_count", k.to_string());
    }
    let text: String = header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

    let mut out = Vec::with_capacity(16 + text.len() + 2 * (data.inputs.len() + data.targets.len()));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for &t in data.inputs.iter().chain(&data.targets) {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 12 || &bytes[..7] != MAGIC {
        return Err(format_err("missing LRNNDS1 magic"));
    }
    if bytes[7] != VERSION {
        return Err(format_err(format!("unsupported version {}", bytes[7])));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| format_err("truncated header"))?;
    let text = std::str::from_utf8(body).map_err(|_| format_err("header is not UTF-8"))?;
    let mut fields = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| format_err(format!("bad header line {line:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format_err(format!("header lacks {k}")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| format_err(format!("{k} is not a number"))) };
    let opt = |k: &str| -> Result<Option<usize>> { fields.contains_key(k).then(|| num(k)).transpose() };
    let kind: TaskKind = get("kind")?.parse().map_err(|_| format_err("unknown task kind"))?;
    let split = match get("split")? {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(format_err(format!("unknown split {other:?}"))),
    };
    let spec = TaskSpec {
        kind,
        vocab_size: num("vocab_size")?,
        seq_len: num("seq_len")?,
        num_train: num("num_train")?,
        num_test: num("num_test")?,
        group_n: opt("group_n")?,
        copy_count: opt("copy_count")?,
        seed: get("seed")?.parse().map_err(|_| format_err("seed is not a number"))?,
    };
    spec.validate()?;
    let (rows, input_len, target_len) = (num("rows")?, num("input_len")?, num("target_len")?);
    if (input_len, target_len) != (spec.input_len(), spec.target_len()) {
        return Err(format_err("row lengths disagree with the task spec"));
    }
    let tokens = &bytes[12 + hlen..];
    let n_in = rows * input_len;
    let n_tg = rows * target_len;
    if tokens.len() != 2 * (n_in + n_tg) {
        return Err(format_err(format!("expected {} token bytes, found {}", 2 * (n_in + n_tg), tokens.len())));
    }
    let mut all = tokens.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]));
    let inputs: Vec<u16> = all.by_ref().take(n_in).collect();
    let targets: Vec<u16> = all.collect();
    Ok(Dataset { spec, split, rows, input_len, target_len, inputs, targets })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub spec: TaskSpec,
    /// File name → SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write both splits and the manifest into `dir`. Existing files are kept
/// unless `force` is set.
pub fn write_dataset_dir(dir: &Path, pair: &DatasetPair, force: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for data in [&pair.train, &pair.test] {
        let bytes = encode_dataset(data);
        let name = split_file_name(data.split);
        files.insert(name.clone(), sha256_hex(&bytes));
        outputs.push((dir.join(name), bytes));
    }
    let manifest = Manifest { format: "LRNNDS1".into(), spec: pair.train.spec.clone(), files };
    outputs.push((dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?));
    if !force {
        if let Some((p, _)) = outputs.iter().find(|(p, _)| p.exists()) {
            return Err(Error::spec("out", format!("{} exists; pass --force to overwrite", p.display())));
        }
    }
    for (path, bytes) in outputs {
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Read both splits of a dataset directory, checking manifest checksums.
pub fn read_dataset_dir(dir: &Path) -> Result<DatasetPair> {
    let mpath = dir.join(MANIFEST);
    let text = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    let load = |split: Split| -> Result<Dataset> {
        let name = split_file_name(split);
        let path = dir.join(&name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let want = manifest.files.get(&name).ok_or_else(|| format_err(format!("manifest lacks {name}")))?;
        if sha256_hex(&bytes) != *want {
            return Err(format_err(format!("checksum mismatch for {}", path.display())));
        }
        let data = decode_dataset(&bytes)?;
        if data.spec != manifest.spec || data.split != split {
            return Err(format_err(format!("{} disagrees with the manifest", path.display())));
        }
        Ok(data)
    };
    Ok(DatasetPair { train: load(Split::Train)?, test: load(Split::Test)? })
}
