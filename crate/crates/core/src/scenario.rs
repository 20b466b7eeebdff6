//! End-to-end benchmark scenarios: synthetic data through a trained model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate, make_pairs, preprocess, split_by_identity, split_tfds2_style, LabeledDataset, PairSet, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::features::LcnConfig;
use crate::knn::LabelKind;
use crate::model::{init_params, train, PairBatch, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelShape {
    pub hidden: usize,
    /// Factor count; `None` means twice the hidden count.
    pub factors: Option<usize>,
    pub init_scale: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            hidden: 32,
            factors: None,
            init_scale: 0.01,
        }
    }
}

impl ModelShape {
    pub fn factor_count(&self) -> usize {
        self.factors.unwrap_or(2 * self.hidden)
    }
}

/// How images are assigned to splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "protocol")]
pub enum SplitProtocol {
    /// One test and one validation image per identity.
    #[default]
    Tfds2,
    /// Whole identities held out, chosen by the split seed.
    IdentityHoldout { validation: usize, test: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub data: SyntheticSpec,
    pub lcn: LcnConfig,
    pub split: SplitProtocol,
    pub split_seed: u64,
    /// Largest transform difference within a training pair; `None` pairs
    /// every two images of an identity.
    pub max_delta: Option<f64>,
    pub include_self: bool,
    pub labels: LabelKind,
    pub model: ModelShape,
    pub train: TrainConfig,
}

impl Default for Scenario {
    /// `rotshapes-default`.
    fn default() -> Self {
        Scenario {
            data: SyntheticSpec::default(),
            lcn: LcnConfig::default(),
            split: SplitProtocol::Tfds2,
            split_seed: 0,
            max_delta: None,
            include_self: true,
            labels: LabelKind::Identity,
            model: ModelShape::default(),
            train: TrainConfig {
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
        }
    }
}

/// A generated, normalized, and split dataset with its training pairs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: LabeledDataset,
    pub pairs: PairSet,
}

impl Prepared {
    pub fn pair_batch(&self) -> Result<PairBatch> {
        PairBatch::from_pairs(self.dataset.images.view(), &self.pairs.pairs)
    }
}

/// Splits the images used to train models: everything but validation and test.
pub const TRAINING_SPLITS: [Split; 2] = [Split::FeatureTrain, Split::KnnTrain];

impl Scenario {
    pub fn prepare(&self) -> Result<Prepared> {
        let raw = generate(&self.data)?;
        let normalized = preprocess(&raw, &self.lcn, None)?;
        let dataset = apply_split(&normalized, self.split, self.split_seed)?;
        let pairs = training_pairs(&dataset, self.max_delta, self.include_self)?;
        Ok(Prepared { dataset, pairs })
    }

    pub fn train_model(&self, prepared: &Prepared) -> Result<TrainOutcome> {
        let d = prepared.dataset.pixels();
        let params = init_params(
            d,
            d,
            self.model.hidden,
            self.model.factor_count(),
            self.model.init_scale,
            self.train.seed,
        )?;
        train(params, &prepared.pair_batch()?, &self.train)
    }
}

/// Tags every image with a split according to `protocol`.
pub fn apply_split(ds: &LabeledDataset, protocol: SplitProtocol, seed: u64) -> Result<LabeledDataset> {
    match protocol {
        SplitProtocol::Tfds2 => split_tfds2_style(ds, seed),
        SplitProtocol::IdentityHoldout { validation, test } => {
            let mut ids = ds.identities();
            if validation + test >= ids.len() {
                return Err(Error::invalid(format!(
                    "cannot hold out {} of {} identities",
                    validation + test,
                    ids.len()
                )));
            }
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            split_by_identity(ds, &ids[..validation], &ids[validation..validation + test])
        }
    }
}

/// Same-identity pairs among the training splits, as indices into `ds`.
pub fn training_pairs(ds: &LabeledDataset, max_delta: Option<f64>, include_self: bool) -> Result<PairSet> {
    let rows = ds.indices_in(&TRAINING_SPLITS);
    if rows.is_empty() {
        return Err(Error::invalid("dataset has no training images"));
    }
    let local = make_pairs(&ds.select(&rows), max_delta, include_self)?;
    Ok(PairSet {
        pairs: local.pairs.iter().map(|&(a, b)| (rows[a], rows[b])).collect(),
        ..local
    })
}
