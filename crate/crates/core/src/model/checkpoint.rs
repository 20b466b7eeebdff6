//! `FGRB` checkpoint files.
//!
//! Layout: magic `FGRB`, format version (u32 LE), then `I`, `J`, `M`, `N`
//! (u32 LE each), then `V`, `W`, `U`, `b`, `c` as row-major f32 LE.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::FgrbmParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FGRB";
pub const CHECKPOINT_VERSION: u32 = 1;

impl FgrbmParams {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let (i, j, m, n) = (self.source_dim(), self.target_dim(), self.hidden_dim(), self.factor_dim());
        let floats = (i + j + m) * n + j + m;
        let mut out = Vec::with_capacity(24 + 4 * floats);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for d in [CHECKPOINT_VERSION as usize, i, j, m, n] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for t in self.tensors() {
            for &x in t {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 24 {
            return Err(format!("file too short for header ({} bytes)", bytes.len()));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err("missing FGRB magic".into());
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
        let version = word(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let (i, j, m, n) = (word(1), word(2), word(3), word(4));
        if i == 0 || j == 0 || m == 0 || n == 0 {
            return Err(format!("zero dimension in header I={i} J={j} M={m} N={n}"));
        }
        let floats = (i + j + m)
            .checked_mul(n)
            .and_then(|x| x.checked_add(j + m))
            .ok_or("dimension overflow")?;
        let expected = 24 + 4 * floats;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let mut data = bytes[24..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
        let mut take = |count: usize| -> Vec<f64> { data.by_ref().take(count).collect() };
        let v = Array2::from_shape_vec((i, n), take(i * n)).unwrap();
        let w = Array2::from_shape_vec((j, n), take(j * n)).unwrap();
        let u = Array2::from_shape_vec((m, n), take(m * n)).unwrap();
        let b = Array1::from_vec(take(j));
        let c = Array1::from_vec(take(m));
        let p = FgrbmParams { v, w, u, b, c };
        if !p.is_finite() {
            return Err("non-finite parameter values".into());
        }
        Ok(p)
    }
}

pub fn save_checkpoint(p: &FgrbmParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, p.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FgrbmParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FgrbmParams::from_checkpoint_bytes(&bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}
