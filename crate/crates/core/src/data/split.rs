//! Split protocols. Each assigns every image one split tag.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};

/// One test image per identity; then one validation image from every
/// identity with at least two images left; the rest form the KNN database.
/// Identities with a single image go to feature training.
pub fn split_tfds1_style(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let groups = ds.by_identity();
    if !groups.iter().any(|(_, m)| m.len() >= 2) {
        return Err(Error::invalid("style-1 split needs an identity with at least 2 images"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::KnnTrain; ds.len()];
    for (_, mut members) in groups {
        if members.len() == 1 {
            splits[members[0]] = Split::FeatureTrain;
            continue;
        }
        members.shuffle(&mut rng);
        splits[members[0]] = Split::Test;
        if members.len() >= 3 {
            splits[members[1]] = Split::Validation;
        }
    }
    Ok(LabeledDataset { splits, ..ds.clone() })
}

/// One test and one validation image from every identity with at least four
/// images; everything else forms the KNN database.
pub fn split_tfds2_style(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let groups = ds.by_identity();
    if !groups.iter().any(|(_, m)| m.len() >= 4) {
        return Err(Error::invalid("style-2 split needs an identity with at least 4 images"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::KnnTrain; ds.len()];
    for (_, mut members) in groups {
        if members.len() < 4 {
            continue;
        }
        members.shuffle(&mut rng);
        splits[members[0]] = Split::Test;
        splits[members[1]] = Split::Validation;
    }
    Ok(LabeledDataset { splits, ..ds.clone() })
}

/// Whole-identity holdout: the listed identities become validation or test;
/// all others form the KNN database.
pub fn split_by_identity(ds: &LabeledDataset, validation: &[usize], test: &[usize]) -> Result<LabeledDataset> {
    if let Some(id) = validation.iter().find(|id| test.contains(id)) {
        return Err(Error::invalid(format!("identity {id} listed for both validation and test")));
    }
    let splits: Vec<Split> = ds
        .meta
        .iter()
        .map(|m| {
            if validation.contains(&m.identity) {
                Split::Validation
            } else if test.contains(&m.identity) {
                Split::Test
            } else {
                Split::KnnTrain
            }
        })
        .collect();
    if !splits.contains(&Split::KnnTrain) {
        return Err(Error::invalid("identity holdout leaves no database images"));
    }
    Ok(LabeledDataset { splits, ..ds.clone() })
}
