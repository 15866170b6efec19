//! Checkpoint files.
//!
//! Layout: the magic `BDLRU1`, a version byte, a u32 LE config length, a
//! `key=value` config block (model fields, then `meta.*` entries), a u32 LE
//! array count, then per array a u16 LE name length, the name, a u8 rank,
//! u32 LE dims and the f32 LE values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::model::{Model, ModelConfig};
use crate::recurrence::LayerConfig;
use crate::tensor::{Scalar, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"BDLRU1";
const VERSION: u8 = 1;

fn format_err(detail: impl Into<String>) -> Error {
    Error::Format { format: "BDLRU1", detail: detail.into() }
}

fn config_block(cfg: &ModelConfig, meta: &BTreeMap<String, String>) -> String {
    let l = &cfg.layer;
    let mut kv: BTreeMap<String, String> = [
        ("kind", l.kind.to_string()),
        ("m", l.m.to_string()),
        ("blocks", l.blocks.to_string()),
        ("norm", l.norm.to_string()),
        ("selective", l.selective.to_string()),
        ("input_dim", l.input_dim.to_string()),
        ("embed_dim", cfg.embed_dim.to_string()),
        ("head", cfg.head.to_string()),
        ("mlp_hidden", cfg.mlp_hidden.to_string()),
        ("vocab", cfg.vocab.to_string()),
        ("classes", cfg.classes.to_string()),
        ("out_slots", cfg.out_slots.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    kv.extend(meta.iter().map(|(k, v)| (format!("meta.{k}"), v.clone())));
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn parse_config(text: &str) -> Result<(ModelConfig, BTreeMap<String, String>)> {
    let mut fields = BTreeMap::new();
    let mut meta = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| format_err(format!("bad config line {line:?}")))?;
        match k.strip_prefix("meta.") {
            Some(m) => {
                meta.insert(m.to_string(), v.to_string());
            }
            None => {
                fields.insert(k, v);
            }
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format_err(format!("config lacks {k}")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| format_err(format!("{k} is not a number"))) };
    let layer = LayerConfig {
        kind: get("kind")?.parse().map_err(|_| format_err("unknown kind"))?,
        m: num("m")?,
        blocks: num("blocks")?,
        norm: get("norm")?.parse().map_err(|_| format_err("unknown norm"))?,
        selective: get("selective")?.parse().map_err(|_| format_err("selective is not a bool"))?,
        input_dim: num("input_dim")?,
    };
    let cfg = ModelConfig {
        layer,
        embed_dim: num("embed_dim")?,
        head: get("head")?.parse().map_err(|_| format_err("unknown head"))?,
        mlp_hidden: num("mlp_hidden")?,
        vocab: num("vocab")?,
        classes: num("classes")?,
        out_slots: num("out_slots")?,
    };
    cfg.validate()?;
    Ok((cfg, meta))
}

/// Encode `model` with free-form metadata. Values are stored as f32.
pub fn write_checkpoint<F: Scalar>(model: &Model<F>, meta: &BTreeMap<String, String>) -> Vec<u8> {
    let text = config_block(&model.cfg, meta);
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, t) in model.names.iter().zip(&model.params) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| format_err("truncated file"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Decode a checkpoint; array names and shapes must match a fresh model of the stored config.
pub fn read_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<(Model<F>, BTreeMap<String, String>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(6).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(format_err("missing BDLRU1 magic"));
    }
    let version = c.take(1)?[0];
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let len = c.u32()?;
    let text = std::str::from_utf8(c.take(len)?).map_err(|_| format_err("config is not UTF-8"))?;
    let (cfg, meta) = parse_config(text)?;
    let mut model = Model::<F>::init(&cfg, &mut crate::tensor::Rng::new(0))?;
    let count = c.u32()?;
    if count != model.params.len() {
        return Err(format_err(format!("{count} arrays, config needs {}", model.params.len())));
    }
    for i in 0..count {
        let nlen = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(nlen)?).map_err(|_| format_err("array name is not UTF-8"))?;
        let rank = c.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        if name != model.names[i] || shape != model.params[i].shape() {
            return Err(format_err(format!(
                "array {i} is {name} {shape:?}, expected {} {:?}",
                model.names[i],
                model.params[i].shape()
            )));
        }
        let n: usize = shape.iter().product();
        let data = c
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| F::from_f64(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        model.params[i] = Tensor::new(shape, data)?;
    }
    if c.pos != bytes.len() {
        return Err(format_err("trailing bytes"));
    }
    Ok((model, meta))
}

pub fn save_checkpoint<F: Scalar>(path: &Path, model: &Model<F>, meta: &BTreeMap<String, String>) -> Result<()> {
    fs::write(path, write_checkpoint(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(Model<F>, BTreeMap<String, String>)> {
    read_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
