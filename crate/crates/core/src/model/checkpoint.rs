//! Checkpoint layout (little-endian):
//!
//! ```text
//! b"EMOT"  u32 version
//! u32 n    n bytes of ModelConfig as `key = value` text
//! u32 arrays
//! per array: u32 rank, rank x u32 dims, prod(dims) x f64
//! ```
//!
//! Arrays follow [`ModelParams::tensors`] order: phone_emb, tone_emb,
//! pos_emb, text_w, text_b, ref_w, ref_b, query_w, tokens, emotion_emb,
//! dec_w, dec_b, then proj when `d_tok != d_text`.

use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::config::KeyValues;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMOT";
const VERSION: u32 = 1;

pub fn write_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = params.config.to_config_string();
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg.as_bytes());
    let tensors = params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.at + n,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Parses checkpoint bytes; `path` is only used in error messages.
pub fn read_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected: "EMOT",
        });
    }
    let mut r = Reader { bytes, at: 4, path };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            version,
        });
    }
    let cfg_len = r.u32()? as usize;
    let cfg_text = std::str::from_utf8(r.take(cfg_len)?)
        .map_err(|e| Error::validation("checkpoint config", e.to_string()))?;
    let config = ModelConfig::from_key_values(KeyValues::parse(cfg_text)?)?;
    let mut params = ModelParams::zeros(&config);
    let n = r.u32()? as usize;
    let mut tensors = params.tensors_mut();
    if n != tensors.len() {
        return Err(Error::validation(
            "checkpoint arrays",
            format!("{n} arrays, config implies {}", tensors.len()),
        ));
    }
    for t in tensors.iter_mut() {
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != t.shape {
            return Err(Error::validation(
                t.name,
                format!("shape {shape:?}, config implies {:?}", t.shape),
            ));
        }
        let raw = r.take(t.data.len() * 8)?;
        for (x, chunk) in t.data.iter_mut().zip(raw.chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    drop(tensors);
    if r.at != bytes.len() {
        return Err(Error::validation(
            "checkpoint",
            format!("{} trailing bytes", bytes.len() - r.at),
        ));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, write_checkpoint(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_checkpoint(&fs::read(path)?, path)
}
