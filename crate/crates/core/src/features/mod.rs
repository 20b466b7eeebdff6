//! Image preprocessing and the feature maps `f(·)` used by the distances.

mod cae;
mod lcn;
mod pca;

pub use cae::{cae_fit, CaeGrads, CaeLoss, CaeModel, CaeTrainConfig};
pub use lcn::{lcn, LcnConfig};
pub use pca::{pca_fit, PcaModel};

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const PCA_MAGIC: &[u8; 4] = b"FPCA";
pub const CAE_MAGIC: &[u8; 4] = b"FCAE";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[serde(rename = "pixel", alias = "identity")]
    Identity,
    Pca,
    Cae,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Identity => "pixel",
            FeatureKind::Pca => "pca",
            FeatureKind::Cae => "cae",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum FeatureSpace {
    #[default]
    Identity,
    Pca(PcaModel),
    Cae(CaeModel),
}

/// Jacobian `∂f/∂x` at a point, kept in factored form.
#[derive(Debug, Clone)]
pub enum FeatureJacobian<'a> {
    Identity,
    /// `f(x) = C (x − μ)`: the Jacobian is `C`.
    Linear(&'a Array2<f64>),
    /// `f(x) = σ(W x + b)`: the Jacobian is `diag(slope) W`.
    Sigmoid {
        weights: &'a Array2<f64>,
        slope: Array1<f64>,
    },
}

impl FeatureJacobian<'_> {
    /// `Jᵀ v`.
    pub fn vjp(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            FeatureJacobian::Identity => v.to_owned(),
            FeatureJacobian::Linear(c) => c.t().dot(&v),
            FeatureJacobian::Sigmoid { weights, slope } => weights.t().dot(&(&v * slope)),
        }
    }

    /// `J v`.
    pub fn jvp(&self, v: ArrayView1<f64>) -> Array1<f64> {
        match self {
            FeatureJacobian::Identity => v.to_owned(),
            FeatureJacobian::Linear(c) => c.dot(&v),
            FeatureJacobian::Sigmoid { weights, slope } => weights.dot(&v) * slope,
        }
    }

    pub fn to_dense(&self, input_dim: usize) -> Array2<f64> {
        match self {
            FeatureJacobian::Identity => Array2::eye(input_dim),
            FeatureJacobian::Linear(c) => (*c).clone(),
            FeatureJacobian::Sigmoid { weights, slope } => {
                let mut j = (*weights).clone();
                for (mut row, &s) in j.rows_mut().into_iter().zip(slope.iter()) {
                    row *= s;
                }
                j
            }
        }
    }
}

impl FeatureSpace {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureSpace::Identity => FeatureKind::Identity,
            FeatureSpace::Pca(_) => FeatureKind::Pca,
            FeatureSpace::Cae(_) => FeatureKind::Cae,
        }
    }

    /// Input dimensionality, or `None` for the identity map.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            FeatureSpace::Identity => None,
            FeatureSpace::Pca(m) => Some(m.input_dim()),
            FeatureSpace::Cae(m) => Some(m.input_dim()),
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureSpace::Identity => input_dim,
            FeatureSpace::Pca(m) => m.n_components(),
            FeatureSpace::Cae(m) => m.hidden_dim(),
        }
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            FeatureSpace::Identity => Ok(x.to_owned()),
            FeatureSpace::Pca(m) => m.encode(x),
            FeatureSpace::Cae(m) => m.encode(x),
        }
    }

    pub fn encode_with_jacobian(&self, x: ArrayView1<f64>) -> Result<(Array1<f64>, FeatureJacobian<'_>)> {
        match self {
            FeatureSpace::Identity => Ok((x.to_owned(), FeatureJacobian::Identity)),
            FeatureSpace::Pca(m) => Ok((m.encode(x)?, FeatureJacobian::Linear(&m.components))),
            FeatureSpace::Cae(m) => {
                let h = m.encode(x)?;
                let slope = h.mapv(|v| v * (1.0 - v));
                Ok((
                    h,
                    FeatureJacobian::Sigmoid {
                        weights: &m.weights,
                        slope,
                    },
                ))
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = match self {
            FeatureSpace::Identity => {
                return Err(Error::invalid("the identity feature space has no checkpoint"));
            }
            FeatureSpace::Pca(m) => pca_to_bytes(m),
            FeatureSpace::Cae(m) => cae_to_bytes(m),
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads an `FPCA` or `FCAE` checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        feature_from_bytes(&bytes).map_err(|message| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    }
}

fn push_header(out: &mut Vec<u8>, magic: &[u8; 4], dims: &[usize]) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

fn push_floats<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn pca_to_bytes(m: &PcaModel) -> Vec<u8> {
    let mut out = Vec::new();
    push_header(&mut out, PCA_MAGIC, &[m.input_dim(), m.n_components()]);
    push_floats(&mut out, m.mean.iter());
    push_floats(&mut out, m.components.iter());
    push_floats(&mut out, m.variances.iter());
    out
}

fn cae_to_bytes(m: &CaeModel) -> Vec<u8> {
    let mut out = Vec::new();
    push_header(&mut out, CAE_MAGIC, &[m.input_dim(), m.hidden_dim()]);
    push_floats(&mut out, m.weights.iter());
    push_floats(&mut out, m.encoder_bias.iter());
    push_floats(&mut out, m.decoder_bias.iter());
    push_floats(&mut out, std::iter::once(&m.contraction));
    out
}

fn feature_from_bytes(bytes: &[u8]) -> std::result::Result<FeatureSpace, String> {
    if bytes.len() < 16 {
        return Err("file too short for header".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    if word(0) as u32 != FEATURE_VERSION {
        return Err(format!("unsupported version {}", word(0)));
    }
    let (d, k) = (word(1), word(2));
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let expect = |count: usize| -> std::result::Result<(), String> {
        if bytes.len() != 16 + 4 * count {
            return Err(format!("expected {} bytes, found {}", 16 + 4 * count, bytes.len()));
        }
        Ok(())
    };
    match &bytes[..4] {
        m if m == PCA_MAGIC => {
            expect(d + k * d + k)?;
            Ok(FeatureSpace::Pca(PcaModel {
                mean: Array1::from(floats[..d].to_vec()),
                components: Array2::from_shape_vec((k, d), floats[d..d + k * d].to_vec()).unwrap(),
                variances: Array1::from(floats[d + k * d..].to_vec()),
            }))
        }
        m if m == CAE_MAGIC => {
            expect(k * d + k + d + 1)?;
            let w_end = k * d;
            Ok(FeatureSpace::Cae(CaeModel {
                weights: Array2::from_shape_vec((k, d), floats[..w_end].to_vec()).unwrap(),
                encoder_bias: Array1::from(floats[w_end..w_end + k].to_vec()),
                decoder_bias: Array1::from(floats[w_end + k..w_end + k + d].to_vec()),
                contraction: floats[w_end + k + d],
            }))
        }
        other => Err(format!("unknown feature magic {:?}", String::from_utf8_lossy(other))),
    }
}

/// Applies `f` to every row, producing one feature row per input row.
pub fn encode_rows(space: &FeatureSpace, rows: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(d) = space.input_dim() {
        check_len("feature input", d, rows.ncols())?;
    }
    Ok(match space {
        FeatureSpace::Identity => rows.to_owned(),
        FeatureSpace::Pca(m) => (&rows - &m.mean).dot(&m.components.t()),
        FeatureSpace::Cae(m) => {
            let mut h = rows.dot(&m.weights.t());
            h += &m.encoder_bias;
            h.mapv_inplace(crate::math::sigmoid);
            h
        }
    })
}
