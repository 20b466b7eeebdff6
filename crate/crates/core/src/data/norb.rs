//! Reader for the small-NORB binary matrix container.
//!
//! Header: a little-endian i32 magic encoding the element type, an i32
//! `ndim`, then `max(ndim, 3)` i32 dimension sizes (unused trailing sizes
//! are stored as 1). Packed little-endian data follows.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC_F32: u32 = 0x1E3D_4C51;
pub const MAGIC_PACKED: u32 = 0x1E3D_4C52;
pub const MAGIC_F64: u32 = 0x1E3D_4C53;
pub const MAGIC_I32: u32 = 0x1E3D_4C54;
pub const MAGIC_U8: u32 = 0x1E3D_4C55;
pub const MAGIC_I16: u32 = 0x1E3D_4C56;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NorbError {
    #[error("unknown NORB magic 0x{0:08X}")]
    UnknownMagic(u32),
    #[error("NORB file truncated: need {expected} bytes, have {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("NORB file has {extra} trailing bytes after the declared data")]
    TrailingBytes { extra: usize },
    #[error("NORB dimensions overflow: {0:?}")]
    DimOverflow(Vec<i64>),
    #[error("NORB I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl ElementType {
    fn from_magic(magic: u32) -> Option<Self> {
        match magic {
            MAGIC_U8 => Some(ElementType::U8),
            MAGIC_I16 => Some(ElementType::I16),
            MAGIC_I32 => Some(ElementType::I32),
            MAGIC_F32 => Some(ElementType::F32),
            MAGIC_F64 => Some(ElementType::F64),
            _ => None,
        }
    }

    pub fn magic(self) -> u32 {
        match self {
            ElementType::U8 => MAGIC_U8,
            ElementType::I16 => MAGIC_I16,
            ElementType::I32 => MAGIC_I32,
            ElementType::F32 => MAGIC_F32,
            ElementType::F64 => MAGIC_F64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 => 2,
            ElementType::I32 | ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NorbData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NorbData {
    pub fn element_type(&self) -> ElementType {
        match self {
            NorbData::U8(_) => ElementType::U8,
            NorbData::I16(_) => ElementType::I16,
            NorbData::I32(_) => ElementType::I32,
            NorbData::F32(_) => ElementType::F32,
            NorbData::F64(_) => ElementType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NorbData::U8(v) => v.len(),
            NorbData::I16(v) => v.len(),
            NorbData::I32(v) => v.len(),
            NorbData::F32(v) => v.len(),
            NorbData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NorbData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            NorbData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            NorbData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            NorbData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NorbData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NorbMatrix {
    pub dims: Vec<usize>,
    pub data: NorbData,
}

fn read_i32(bytes: &[u8], at: usize) -> Result<i32, NorbError> {
    bytes
        .get(at..at + 4)
        .map(|b| i32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(NorbError::Truncated {
            expected: at + 4,
            actual: bytes.len(),
        })
}

pub fn parse_norb_bytes(bytes: &[u8]) -> Result<NorbMatrix, NorbError> {
    let magic = read_i32(bytes, 0)? as u32;
    let elem = ElementType::from_magic(magic).ok_or(NorbError::UnknownMagic(magic))?;
    let ndim = read_i32(bytes, 4)?;
    if !(0..=64).contains(&ndim) {
        return Err(NorbError::DimOverflow(vec![ndim as i64]));
    }
    let ndim = ndim as usize;
    let stored = ndim.max(3);
    let mut raw = Vec::with_capacity(stored);
    for k in 0..stored {
        raw.push(read_i32(bytes, 8 + 4 * k)? as i64);
    }
    let header = 8 + 4 * stored;
    if raw.iter().any(|&d| d < 0) {
        return Err(NorbError::DimOverflow(raw));
    }
    let dims: Vec<usize> = raw[..ndim].iter().map(|&d| d as usize).collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NorbError::DimOverflow(raw.clone()))?;
    let payload = count.checked_mul(elem.size()).ok_or_else(|| NorbError::DimOverflow(raw.clone()))?;
    let expected = header.checked_add(payload).ok_or_else(|| NorbError::DimOverflow(raw.clone()))?;
    if bytes.len() < expected {
        return Err(NorbError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(NorbError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let body = &bytes[header..];
    let data = match elem {
        ElementType::U8 => NorbData::U8(body.to_vec()),
        ElementType::I16 => NorbData::I16(body.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())).collect()),
        ElementType::I32 => NorbData::I32(body.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        ElementType::F32 => NorbData::F32(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        ElementType::F64 => NorbData::F64(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
    };
    Ok(NorbMatrix { dims, data })
}

pub fn parse_norb_matrix(path: impl AsRef<Path>) -> Result<NorbMatrix, NorbError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NorbError::Io(format!("{}: {e}", path.display())))?;
    parse_norb_bytes(&bytes)
}

/// Serializes a matrix in the same container format.
pub fn encode_norb_matrix(m: &NorbMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&m.data.element_type().magic().to_le_bytes());
    out.extend_from_slice(&(m.dims.len() as i32).to_le_bytes());
    for k in 0..m.dims.len().max(3) {
        let d = m.dims.get(k).copied().unwrap_or(1);
        out.extend_from_slice(&(d as i32).to_le_bytes());
    }
    match &m.data {
        NorbData::U8(v) => out.extend_from_slice(v),
        NorbData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NorbData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NorbData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NorbData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_written_fixture() {
        let m = NorbMatrix {
            dims: vec![2, 3, 4],
            data: NorbData::U8((0..24).collect()),
        };
        let parsed = parse_norb_bytes(&encode_norb_matrix(&m)).unwrap();
        assert_eq!(parsed.dims, vec![2, 3, 4]);
        assert_eq!(parsed.data.len(), 24);
        assert_eq!(parsed, m);
    }

    #[test]
    fn short_rank_pads_header_to_three_dims() {
        let m = NorbMatrix {
            dims: vec![5],
            data: NorbData::I32(vec![1, -2, 3, -4, 5]),
        };
        let bytes = encode_norb_matrix(&m);
        assert_eq!(bytes.len(), 8 + 12 + 20);
        assert_eq!(parse_norb_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn high_rank_round_trips() {
        let m = NorbMatrix {
            dims: vec![2, 1, 2, 3],
            data: NorbData::F32((0..12).map(|k| k as f32 * 0.5).collect()),
        };
        assert_eq!(parse_norb_bytes(&encode_norb_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn error_kinds_are_distinct() {
        let m = NorbMatrix {
            dims: vec![2, 2],
            data: NorbData::F64(vec![1.0, 2.0, 3.0, 4.0]),
        };
        let bytes = encode_norb_matrix(&m);
        assert!(matches!(parse_norb_bytes(&bytes[..bytes.len() - 3]), Err(NorbError::Truncated { .. })));
        let mut wrong = bytes.clone();
        wrong[0] = 0;
        assert!(matches!(parse_norb_bytes(&wrong), Err(NorbError::UnknownMagic(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(parse_norb_bytes(&extra), Err(NorbError::TrailingBytes { extra: 1 })));
        let mut huge = encode_norb_matrix(&NorbMatrix { dims: vec![1, 1, 1], data: NorbData::U8(vec![0]) });
        huge[8..12].copy_from_slice(&i32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&i32::MAX.to_le_bytes());
        huge[16..20].copy_from_slice(&i32::MAX.to_le_bytes());
        assert!(matches!(parse_norb_bytes(&huge), Err(NorbError::DimOverflow(_))));
    }
}
