//! EMBS: a single-file embedding container.
//!
//! ```text
//! "EMBS"            4 bytes magic
//! version           u32 LE (= 1)
//! meta_len          u32 LE
//! meta              meta_len bytes of UTF-8 JSON
//! payload           rows × d f32 LE, row-major
//! id table          n × (u16 LE byte length, UTF-8 bytes)
//! ```
//!
//! `rows` is `n` for SHARED sets and `n·k` for PER_EMOTION sets. Nothing may
//! follow the id table.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMeta, EmbeddingSet, Variant};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMBS";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    n: usize,
    d: usize,
    k: usize,
    variant: Variant,
    dtype: String,
    encoder: String,
    #[serde(default)]
    template_id: Option<String>,
    emotions: Vec<String>,
    #[serde(default)]
    created: Option<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

pub fn encode(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let meta = set.meta();
    let header = Header {
        n: set.n(),
        d: set.d(),
        k: set.k(),
        variant: set.variant(),
        dtype: DTYPE.to_owned(),
        encoder: meta.encoder.clone(),
        template_id: meta.template_id.clone(),
        emotions: meta.emotions.clone(),
        created: meta.created.clone(),
        extra: meta.extra.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let meta_len = u32::try_from(json.len())
        .map_err(|_| Error::Format("metadata larger than 4 GiB".into()))?;

    let payload = set.vectors().len() * 4;
    let mut out = Vec::with_capacity(12 + json.len() + payload + set.n() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in set.vectors().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in set.ids() {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Format(format!("id `{id}` longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated file: need {len} bytes for {what} at offset {}, {} left",
                    self.pos,
                    self.buf.len() - self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not an EMBS file".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let meta_len = cur.u32("metadata length")? as usize;
    let header: Header = serde_json::from_slice(cur.take(meta_len, "metadata")?)
        .map_err(|e| Error::Format(format!("metadata: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::Format(format!(
            "unsupported dtype `{}`",
            header.dtype
        )));
    }
    if header.k != header.emotions.len() {
        return Err(Error::Format(format!(
            "metadata k={} but {} emotions listed",
            header.k,
            header.emotions.len()
        )));
    }
    let rows = match header.variant {
        Variant::Shared => header.n,
        Variant::PerEmotion => header
            .n
            .checked_mul(header.k)
            .ok_or_else(|| Error::Format("row count overflows".into()))?,
    };
    let floats = rows
        .checked_mul(header.d)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let raw = cur.take(floats.saturating_mul(4), "payload")?;
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut ids = Vec::with_capacity(header.n);
    for i in 0..header.n {
        let len = cur.take(2, "id length")?;
        let len = u16::from_le_bytes([len[0], len[1]]) as usize;
        let raw = cur.take(len, "id")?;
        let id =
            std::str::from_utf8(raw).map_err(|_| Error::Format(format!("id {i} is not UTF-8")))?;
        ids.push(id.to_owned());
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after id table: metadata and payload sizes disagree",
            bytes.len() - cur.pos
        )));
    }

    let vectors =
        Array2::from_shape_vec((rows, header.d), data).map_err(|e| Error::Format(e.to_string()))?;
    let meta = EmbeddingMeta {
        encoder: header.encoder,
        template_id: header.template_id,
        emotions: header.emotions,
        created: header.created,
        extra: header.extra,
    };
    let set = EmbeddingSet::new(header.variant, ids, vectors, meta)?;
    if set.meta().extra.get("l2_normalized") == Some(&serde_json::Value::Bool(true)) {
        set.check_unit_norm(1e-5)?;
    }
    Ok(set)
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(set)?).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
