use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Ordered same-identity training pairs, as indices into a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    /// `None` places no bound on the transform difference.
    pub max_delta: Option<f64>,
    pub include_self: bool,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// All ordered pairs `(a, b)` of images sharing an identity with
/// `|param_a − param_b| ≤ max_delta`. Self pairs `(a, a)` only when
/// `include_self` is set.
pub fn make_pairs(ds: &LabeledDataset, max_delta: Option<f64>, include_self: bool) -> Result<PairSet> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot build pairs from an empty dataset"));
    }
    let bound = max_delta.unwrap_or(f64::INFINITY);
    let mut pairs = Vec::new();
    for (_, members) in ds.by_identity() {
        for &a in &members {
            for &b in &members {
                if a == b && !include_self {
                    continue;
                }
                let delta = (ds.meta[a].transform_param - ds.meta[b].transform_param).abs();
                if delta <= bound {
                    pairs.push((a, b));
                }
            }
        }
    }
    Ok(PairSet {
        pairs,
        max_delta,
        include_self,
    })
}
