//! Synthetic transformation datasets, pairing, splitting, and file formats.

mod io;
pub mod norb;
mod pairs;
mod preprocess;
mod split;
mod synth;

pub use io::{load_dataset, read_float_raw, read_pgm, save_dataset, write_float_raw, write_pgm, MANIFEST_NAME};
pub use pairs::{make_pairs, PairSet};
pub use preprocess::{preprocess, resize_bilinear};
pub use split::{split_by_identity, split_tfds1_style, split_tfds2_style};
pub use synth::{generate, render_transform, SyntheticSpec, TransformKind};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    FeatureTrain,
    KnnTrain,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::FeatureTrain => "feature_train",
            Split::KnnTrain => "knn_train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "feature_train" => Some(Split::FeatureTrain),
            "knn_train" => Some(Split::KnnTrain),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// How pixel values are stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelFormat {
    /// Values in `[0, 1]` on a 1/255 grid, stored as 8-bit PGM.
    Gray8,
    /// Arbitrary f32 values, stored as float-raw files.
    Float32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub identity: usize,
    pub class: usize,
    pub transform_param: f64,
}

/// Images (one flattened row-major image per row) with labels and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub height: usize,
    pub width: usize,
    pub format: PixelFormat,
    pub images: Array2<f64>,
    pub meta: Vec<ImageMeta>,
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn new(
        height: usize,
        width: usize,
        format: PixelFormat,
        images: Array2<f64>,
        meta: Vec<ImageMeta>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if images.ncols() != height * width {
            return Err(Error::invalid(format!(
                "image rows have {} pixels, expected {height}x{width}",
                images.ncols()
            )));
        }
        if meta.len() != images.nrows() || splits.len() != images.nrows() {
            return Err(Error::invalid("metadata and split tags must cover every image"));
        }
        Ok(LabeledDataset {
            height,
            width,
            format,
            images,
            meta,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, k: usize) -> ArrayView1<'_, f64> {
        self.images.row(k)
    }

    pub fn image_2d(&self, k: usize) -> ArrayView2<'_, f64> {
        self.images
            .row(k)
            .into_shape_with_order((self.height, self.width))
            .expect("row-major image")
    }

    pub fn indices_in(&self, splits: &[Split]) -> Vec<usize> {
        (0..self.len()).filter(|&k| splits.contains(&self.splits[k])).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Rows with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            height: self.height,
            width: self.width,
            format: self.format,
            images: self.images.select(Axis(0), indices),
            meta: indices.iter().map(|&k| self.meta[k]).collect(),
            splits: indices.iter().map(|&k| self.splits[k]).collect(),
        }
    }

    pub fn subset(&self, splits: &[Split]) -> LabeledDataset {
        self.select(&self.indices_in(splits))
    }

    /// Distinct identities in first-appearance order.
    pub fn identities(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for m in &self.meta {
            if !seen.contains(&m.identity) {
                seen.push(m.identity);
            }
        }
        seen
    }

    /// Image indices grouped by identity, groups in first-appearance order.
    pub fn by_identity(&self) -> Vec<(usize, Vec<usize>)> {
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for (k, m) in self.meta.iter().enumerate() {
            match groups.iter_mut().find(|(id, _)| *id == m.identity) {
                Some((_, members)) => members.push(k),
                None => groups.push((m.identity, vec![k])),
            }
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_names_round_trip() {
        for s in [Split::FeatureTrain, Split::KnnTrain, Split::Validation, Split::Test] {
            assert_eq!(Split::parse(s.as_str()), Some(s));
        }
        assert_eq!(Split::parse("train"), None);
    }
}
