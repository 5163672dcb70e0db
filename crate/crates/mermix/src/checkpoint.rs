//! Model checkpoints.
//!
//! ```text
//! "MCK1" | 0x01 | config length u32 | key=value config text |
//! tensor count u32 | per tensor: name length u16 | name | rank u8 |
//!                                dims u32 x rank | f64 values
//! ```
//!
//! Values keep full `f64` precision so that a checkpoint taken before any
//! update equals the initialization exactly.

use std::fs;
use std::path::Path;

use mermix_core::{FusionConfig, FusionModelParams, TrainConfig};

use crate::config;
use crate::error::{io, Error, Result};
use crate::mef::write_atomic;

pub const MAGIC: [u8; 4] = *b"MCK1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FusionConfig,
    pub params: FusionModelParams,
    /// The training settings that produced the parameters, if recorded.
    pub train_config: String,
}

pub fn encode(model: &FusionConfig, params: &FusionModelParams, train: Option<&TrainConfig>) -> Vec<u8> {
    let mut pairs = config::model_pairs(model);
    if let Some(t) = train {
        pairs.extend(config::train_pairs(t));
    }
    let text = config::render(&pairs);
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(0x01);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let entries = params.entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> std::result::Result<&'a [u8], String> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or("truncated")?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn u32_at(bytes: &[u8], pos: &mut usize) -> std::result::Result<u32, String> {
    let b = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err("bad magic, expected \"MCK1\"".into());
    }
    if take(bytes, &mut pos, 1)?[0] != 0x01 {
        return Err("unsupported endianness marker".into());
    }
    let len = u32_at(bytes, &mut pos)? as usize;
    let text = std::str::from_utf8(take(bytes, &mut pos, len)?).map_err(|e| format!("config text: {e}"))?;
    let model = config::model_from(&config::parse(text)?)?;
    let mut params = FusionModelParams::zeros(&model).map_err(|e| e.to_string())?;
    let count = u32_at(bytes, &mut pos)? as usize;
    let mut entries = params.entries_mut();
    if count != entries.len() {
        return Err(format!("{count} tensors stored, config needs {}", entries.len()));
    }
    for (want, t) in entries.iter_mut() {
        let n = take(bytes, &mut pos, 2)?;
        let name = std::str::from_utf8(take(bytes, &mut pos, u16::from_le_bytes([n[0], n[1]]).into())?)
            .map_err(|e| format!("tensor name: {e}"))?;
        if name != want {
            return Err(format!("found tensor `{name}` where `{want}` belongs"));
        }
        let rank = take(bytes, &mut pos, 1)?[0] as usize;
        let dims = (0..rank)
            .map(|_| u32_at(bytes, &mut pos).map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if dims != t.shape() {
            return Err(format!("`{name}` has shape {dims:?}, config needs {:?}", t.shape()));
        }
        for v in t.data_mut() {
            let b = take(bytes, &mut pos, 8)?;
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    drop(entries);
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - pos));
    }
    Ok(Checkpoint {
        model,
        params,
        train_config: text.to_string(),
    })
}

pub fn save(path: &Path, model: &FusionConfig, params: &FusionModelParams, train: Option<&TrainConfig>) -> Result<()> {
    write_atomic(path, &encode(model, params, train))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io(path))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
