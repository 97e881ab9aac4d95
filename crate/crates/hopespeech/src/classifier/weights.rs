//! Binary container for named f64 tensors, used by backbone directories
//! and training checkpoints.
//!
//! Layout: 8-byte magic, little-endian tensor records (name, shape,
//! data), then a SHA-256 digest of everything before it. The digest
//! turns silent corruption and truncation into a loud load error.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::nn::ParamRef;

const MAGIC: &[u8; 8] = b"HSWT0001";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights file not found: {0}")]
    Missing(PathBuf),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a weights file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("corrupt weights file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },
}

/// One named tensor: shape and row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Gathers every parameter a visitor yields into named tensors.
pub fn collect_tensors(visit: impl FnOnce(&mut dyn FnMut(ParamRef))) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    visit(&mut |p: ParamRef| {
        out.push(NamedTensor {
            name: p.name().to_string(),
            shape: p.shape(),
            data: p.value_slice().to_vec(),
        })
    });
    out
}

/// Restores visited parameters from named tensors. Every parameter must
/// be present with the exact name and shape, and no extra tensors may
/// remain — a store and a model can never silently disagree.
pub fn restore_tensors(
    tensors: &[NamedTensor],
    visit: impl FnOnce(&mut dyn FnMut(ParamRef)),
) -> Result<(), String> {
    let mut by_name: std::collections::HashMap<&str, &NamedTensor> =
        tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut problems = Vec::new();
    visit(&mut |mut p: ParamRef| match by_name.remove(p.name()) {
        Some(t) if t.shape == p.shape() => p.value_slice_mut().copy_from_slice(&t.data),
        Some(t) => problems.push(format!(
            "tensor '{}': expected shape {:?}, found {:?}",
            p.name(),
            p.shape(),
            t.shape
        )),
        None => problems.push(format!("missing tensor '{}'", p.name())),
    });
    for leftover in by_name.keys() {
        problems.push(format!("unexpected tensor '{leftover}'"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

/// Serializes tensors and appends the integrity digest.
pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<(), WeightsError> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(t.shape.len() as u8);
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    let mut file = std::fs::File::create(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&buf).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads tensors back, verifying the digest before trusting anything.
pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>, WeightsError> {
    if !path.exists() {
        return Err(WeightsError::Missing(path.to_path_buf()));
    }
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|source| WeightsError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let corrupt = |detail: &str| WeightsError::Corrupt {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if raw.len() < MAGIC.len() + 32 {
        return Err(corrupt("file shorter than header plus digest"));
    }
    if &raw[..MAGIC.len()] != MAGIC {
        return Err(WeightsError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let (body, trailer) = raw.split_at(raw.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(corrupt("checksum mismatch (truncated or altered file)"));
    }

    let mut pos = MAGIC.len();
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], WeightsError> {
        let end = pos.checked_add(n).ok_or_else(|| corrupt("length overflow"))?;
        if end > body.len() {
            return Err(corrupt("record extends past end of file"));
        }
        let s = &body[*pos..end];
        *pos = end;
        Ok(s)
    };
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = take(&mut pos, len * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, shape, data });
    }
    if pos != body.len() {
        return Err(corrupt("trailing bytes after last tensor"));
    }
    Ok(tensors)
}
