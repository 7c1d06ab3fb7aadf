//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "TPRUNECK"
//! version      u32       = 1
//! meta_len     u64
//! meta         meta_len bytes of UTF-8 JSON:
//!              { "config": ModelConfig,
//!                "attention": { "<layer>.self" | "<layer>.cross": {"qk_dims", "v_dims", "scale"} } }
//! n_tensors    u32
//! per tensor:
//!   name_len   u32, name (UTF-8)
//!   rank       u32, dims (u64 each)
//!   data       prod(dims) x f64 (IEEE-754 little-endian)
//! ```
//!
//! Tensor names are the leaf names of [`ModelParams::visit`]; a factored
//! matrix `W` is stored as `W.u`, `W.s`, `W.v`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Attention, ModelParams, Parameters, Weight};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TPRUNECK";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct AttnMeta {
    qk_dims: Vec<usize>,
    v_dims: Vec<usize>,
    scale: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    attention: BTreeMap<String, AttnMeta>,
}

fn attention_meta(p: &Parameters) -> BTreeMap<String, AttnMeta> {
    let meta = |a: &Attention<Tensor>| AttnMeta {
        qk_dims: a.qk_dims.clone(),
        v_dims: a.v_dims.clone(),
        scale: a.scale,
    };
    let mut out = BTreeMap::new();
    for (l, layer) in p.encoder.iter().enumerate() {
        out.insert(format!("enc.{l}.self"), meta(&layer.self_attn));
    }
    for (l, layer) in p.decoder.iter().enumerate() {
        out.insert(format!("dec.{l}.self"), meta(&layer.self_attn));
        out.insert(format!("dec.{l}.cross"), meta(&layer.cross_attn));
    }
    out
}

pub fn to_bytes(params: &Parameters) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Meta {
        config: params.config,
        attention: attention_meta(params),
    })?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    let mut tensors = Vec::new();
    params.visit(|name, t| tensors.push((name, t)));
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Parameters> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let meta_len = r.u64()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;
    let n = r.u32()? as usize;
    let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    let params = assemble(meta, tensors)?;
    params.check_shapes()?;
    Ok(params)
}

fn assemble(meta: Meta, mut tensors: HashMap<String, Tensor>) -> Result<Parameters> {
    // Build a skeleton with the right structure from the config, then fill
    // every leaf by name.
    let mut skeleton = Parameters::init(meta.config)?;
    let attn_meta = |name: &str| {
        meta.attention
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing attention metadata for {name}")))
    };
    for (l, layer) in skeleton.encoder.iter_mut().enumerate() {
        let m = attn_meta(&format!("enc.{l}.self"))?;
        apply_attn_meta(&mut layer.self_attn, m);
    }
    for (l, layer) in skeleton.decoder.iter_mut().enumerate() {
        apply_attn_meta(&mut layer.self_attn, attn_meta(&format!("dec.{l}.self"))?);
        apply_attn_meta(&mut layer.cross_attn, attn_meta(&format!("dec.{l}.cross"))?);
    }
    // Factored matrices are recognised by their `.u` leaf.
    let factored = |name: &str, tensors: &HashMap<String, Tensor>| tensors.contains_key(&format!("{name}.u"));
    let fix = |w: &mut Weight<Tensor>, name: String| {
        if factored(&name, &tensors) {
            let z = Tensor::zeros(&[0]);
            *w = Weight::Factored { u: z.clone(), s: z.clone(), v: z };
        }
    };
    for (l, layer) in skeleton.encoder.iter_mut().enumerate() {
        for (w, n) in [
            (&mut layer.self_attn.wq, "self.wq"),
            (&mut layer.self_attn.wk, "self.wk"),
            (&mut layer.self_attn.wv, "self.wv"),
            (&mut layer.self_attn.wo, "self.wo"),
            (&mut layer.ffn.w1, "ffn.w1"),
            (&mut layer.ffn.w2, "ffn.w2"),
        ] {
            fix(w, format!("enc.{l}.{n}"));
        }
    }
    for (l, layer) in skeleton.decoder.iter_mut().enumerate() {
        for (w, n) in [
            (&mut layer.self_attn.wq, "self.wq"),
            (&mut layer.self_attn.wk, "self.wk"),
            (&mut layer.self_attn.wv, "self.wv"),
            (&mut layer.self_attn.wo, "self.wo"),
            (&mut layer.cross_attn.wq, "cross.wq"),
            (&mut layer.cross_attn.wk, "cross.wk"),
            (&mut layer.cross_attn.wv, "cross.wv"),
            (&mut layer.cross_attn.wo, "cross.wo"),
            (&mut layer.ffn.w1, "ffn.w1"),
            (&mut layer.ffn.w2, "ffn.w2"),
        ] {
            fix(w, format!("dec.{l}.{n}"));
        }
    }
    let out: ModelParams<Tensor> = skeleton.try_map(|name, _| {
        tensors
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    })?;
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Format(format!("unexpected tensor `{extra}`")));
    }
    Ok(out)
}

fn apply_attn_meta(a: &mut Attention<Tensor>, m: &AttnMeta) {
    a.qk_dims = m.qk_dims.clone();
    a.v_dims = m.v_dims.clone();
    a.scale = m.scale;
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &Parameters) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(params)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Parameters> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
