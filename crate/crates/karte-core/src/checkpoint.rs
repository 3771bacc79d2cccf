//! Checkpoint bytes: magic `KCPT`, a version, a manifest of named shapes,
//! raw little-endian single-precision values in manifest order, and an
//! optional parallel section with the Adam moments so training can resume.
//!
//! Values are stored in single precision; training math is double, so a
//! save/load round trip quantizes once (documented, deterministic).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::tensor::Parameter;

pub const MAGIC: [u8; 4] = *b"KCPT";
pub const VERSION: u16 = 1;

const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u16),
    Truncated { need: usize, have: usize },
    BadName,
    UnknownDtype(u8),
    TrailingBytes(usize),
    MissingParam(String),
    UnexpectedParam(String),
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a checkpoint: bad magic bytes"),
            CheckpointError::UnsupportedVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CheckpointError::Truncated { need, have } => {
                write!(f, "checkpoint truncated: need {need} bytes, have {have}")
            }
            CheckpointError::BadName => write!(f, "parameter name is not valid UTF-8"),
            CheckpointError::UnknownDtype(d) => write!(f, "unknown dtype tag {d}"),
            CheckpointError::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            CheckpointError::MissingParam(name) => write!(f, "checkpoint is missing parameter `{name}`"),
            CheckpointError::UnexpectedParam(name) => {
                write!(f, "checkpoint has unexpected parameter `{name}`")
            }
            CheckpointError::ShapeMismatch { name, expected, found } => {
                write!(f, "parameter `{name}`: expected shape {expected:?}, found {found:?}")
            }
        }
    }
}

impl core::error::Error for CheckpointError {}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
    /// `(first_moment, second_moment, step_count)` when the moments
    /// section is present.
    pub moments: Option<(Vec<f32>, Vec<f32>, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCheckpoint {
    pub params: Vec<LoadedParam>,
}

impl LoadedCheckpoint {
    pub fn get(&self, name: &str) -> Option<&LoadedParam> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub fn serialize(params: &[&Parameter], with_moments: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let name = p.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(DTYPE_F32);
    }
    for p in params {
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.push(with_moments as u8);
    if with_moments {
        for p in params {
            out.extend_from_slice(&p.step_count.to_le_bytes());
            for &v in p.first_moment.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &v in p.second_moment.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                need: self.pos + n,
                have: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn parse(bytes: &[u8]) -> Result<LoadedCheckpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(CheckpointError::UnknownDtype(dtype));
        }
        manifest.push((name, shape));
    }
    let mut params = Vec::with_capacity(count);
    for (name, shape) in &manifest {
        let len: usize = shape.iter().product();
        params.push(LoadedParam {
            name: name.clone(),
            shape: shape.clone(),
            values: r.f32s(len)?,
            moments: None,
        });
    }
    let has_moments = r.u8()? != 0;
    if has_moments {
        for p in params.iter_mut() {
            let step = r.u64()?;
            let len: usize = p.shape.iter().product();
            let m = r.f32s(len)?;
            let v = r.f32s(len)?;
            p.moments = Some((m, v, step));
        }
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(LoadedCheckpoint { params })
}

/// Copies checkpoint values (and moments when present) into the given
/// parameters, matched by name. With `strict`, every checkpoint entry must
/// be consumed.
pub fn load_into(
    loaded: &LoadedCheckpoint,
    targets: &mut [&mut Parameter],
    strict: bool,
) -> Result<(), CheckpointError> {
    for target in targets.iter_mut() {
        let entry = loaded
            .get(&target.name)
            .ok_or_else(|| CheckpointError::MissingParam(target.name.clone()))?;
        if entry.shape != target.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: target.name.clone(),
                expected: target.shape().to_vec(),
                found: entry.shape.clone(),
            });
        }
        for (dst, &src) in target.value.data_mut().iter_mut().zip(entry.values.iter()) {
            *dst = src as f64;
        }
        if let Some((m, v, step)) = &entry.moments {
            for (dst, &src) in target.first_moment.data_mut().iter_mut().zip(m.iter()) {
                *dst = src as f64;
            }
            for (dst, &src) in target.second_moment.data_mut().iter_mut().zip(v.iter()) {
                *dst = src as f64;
            }
            target.step_count = *step;
        }
    }
    if strict {
        for entry in &loaded.params {
            if !targets.iter().any(|t| t.name == entry.name) {
                return Err(CheckpointError::UnexpectedParam(entry.name.clone()));
            }
        }
    }
    Ok(())
}
