//! Binary model files: `SAFE1`, a little-endian u32 tensor count, then per
//! tensor its name length and UTF-8 name, rank, u32 extents and f32 values.
//! The model configuration travels as `meta.*` tensors.

use std::fs;
use std::path::Path;

use ssan_tensor::Tensor;

use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Recognizer};
use crate::params::ParamStore;

pub const MAGIC: &[u8; 5] = b"SAFE1";

const META_ENCODER: &str = "meta.encoder";
const META_CHARSET: &str = "meta.charset";
const META_WIDTH_DIV: &str = "meta.width_div";

fn text_tensor(s: &str) -> Tensor<f32> {
    let codes: Vec<f32> = s.chars().map(|c| c as u32 as f32).collect();
    Tensor::new(vec![codes.len()], codes).expect("rank-1 of its own length")
}

fn tensor_text(t: &Tensor<f32>) -> Option<String> {
    t.data().iter().map(|&v| char::from_u32(v as u32)).collect()
}

pub fn to_bytes(model: &Recognizer<f32>) -> Vec<u8> {
    let cfg = model.config();
    let meta = [
        (META_ENCODER, text_tensor(&cfg.encoder)),
        (META_CHARSET, text_tensor(&cfg.charset.as_string())),
        (META_WIDTH_DIV, Tensor::scalar(cfg.width_div as f32)),
    ];
    let params: Vec<(&str, &Tensor<f32>)> = model.params().iter().map(|(k, e)| (k, &e.value)).collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&((meta.len() + params.len()) as u32).to_le_bytes());
    for (name, t) in meta.iter().map(|(n, t)| (*n, t)).chain(params) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
}

/// Decodes every record in file order.
pub fn read_tensors(bytes: &[u8]) -> std::result::Result<Vec<(String, Tensor<f32>)>, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()) != Some(MAGIC.as_slice()) {
        return Err("missing SAFE1 magic".into());
    }
    let truncated = || "truncated record".to_string();
    let count = r.u32().ok_or_else(truncated)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| "tensor name is not UTF-8".to_string())?
            .to_string();
        let rank = r.u32().ok_or_else(truncated)? as usize;
        if rank > 8 {
            return Err(format!("tensor {:?} has rank {}", name, rank));
        }
        let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Option<_>>().ok_or_else(truncated)?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("extent overflow")?;
        let raw = r.take(numel.checked_mul(4).ok_or("extent overflow")?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        out.push((name, Tensor::new(shape, data).map_err(|e| e.to_string())?));
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after the last record".into());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Recognizer<f32>> {
    let records = read_tensors(bytes).map_err(|e| Error::format(path, e))?;
    let mut params = ParamStore::new();
    let (mut encoder, mut charset, mut width_div) = (None, None, None);
    for (name, t) in records {
        match name.as_str() {
            META_ENCODER => encoder = tensor_text(&t),
            META_CHARSET => charset = tensor_text(&t),
            META_WIDTH_DIV if t.numel() == 1 => width_div = Some(t.item() as usize),
            _ => params.insert_param(name, t),
        }
    }
    let missing = |what: &str| Error::format(path, format!("missing {}", what));
    let config = ModelConfig {
        encoder: encoder.ok_or_else(|| missing(META_ENCODER))?,
        width_div: width_div.ok_or_else(|| missing(META_WIDTH_DIV))?,
        charset: Charset::from_symbols(&charset.ok_or_else(|| missing(META_CHARSET))?)?,
    };
    Recognizer::with_params(config, params).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save(model: &Recognizer<f32>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Recognizer<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
