//! Experiment configuration: a JSON document plus `section.key=value`
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use transdist::data::SyntheticSpec;
use transdist::distance::DistanceConfig;
use transdist::features::{CaeTrainConfig, FeatureKind, LcnConfig};
use transdist::knn::{AugmentConfig, Direction, EvalMode, LabelKind};
use transdist::model::TrainConfig;
use transdist::scenario::SplitProtocol;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub synthetic: SyntheticSpec,
    /// Existing dataset directory to use instead of the generator.
    pub dir: Option<PathBuf>,
    pub split: SplitProtocol,
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            synthetic: SyntheticSpec::default(),
            dir: None,
            split: SplitProtocol::Tfds2,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub lcn: LcnConfig,
    pub downsample: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Feature space used by `eval`, `sweep`, and `viz-strip`.
    pub kind: FeatureKind,
    pub size: usize,
    /// Cross-validation grid.
    pub kinds: Vec<FeatureKind>,
    pub sizes: Vec<usize>,
    pub contraction: f64,
    pub train: CaeTrainConfig,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            kind: FeatureKind::Identity,
            size: 64,
            kinds: vec![FeatureKind::Pca, FeatureKind::Cae],
            sizes: vec![64, 128, 256],
            contraction: 0.1,
            train: CaeTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FgrbmSection {
    pub hidden: usize,
    /// Cross-validation grid for `hidden`.
    pub hidden_grid: Vec<usize>,
    /// `None` means twice the hidden count.
    pub factors: Option<usize>,
    pub init_scale: f64,
    pub max_delta: Option<f64>,
    pub include_self: bool,
    pub train: TrainConfig,
}

impl Default for FgrbmSection {
    fn default() -> Self {
        FgrbmSection {
            hidden: 32,
            hidden_grid: vec![64, 128, 256],
            factors: None,
            init_scale: 0.01,
            max_delta: None,
            include_self: true,
            train: TrainConfig {
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub modes: Vec<EvalMode>,
    pub k: usize,
    pub k_grid: Vec<usize>,
    pub missing_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub labels: LabelKind,
    pub direction: Direction,
    pub augment: AugmentConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            modes: vec![EvalMode::Regular, EvalMode::Transforming],
            k: 1,
            k_grid: (1..=30).collect(),
            missing_rates: vec![0.0, 0.3, 0.5, 0.7, 0.9],
            seeds: vec![0],
            labels: LabelKind::Identity,
            direction: Direction::DatabaseToQuery,
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub features: FeaturesSection,
    pub fgrbm: FgrbmSection,
    pub distance: DistanceConfig,
    pub eval: EvalSection,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ExperimentConfig {
                out: PathBuf::from("out"),
                ..Default::default()
            });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        if cfg.out.as_os_str().is_empty() {
            cfg.out = PathBuf::from("out");
        }
        Ok(cfg)
    }

    /// Applies one `section.key=value` override. The value is read as JSON
    /// when it parses, otherwise as a string.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (path, raw) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form section.key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut doc;
        let keys: Vec<&str> = path.split('.').collect();
        for (depth, key) in keys.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CliError::Config(format!("`{}` is not a section", keys[..depth].join("."))))?;
            if !obj.contains_key(*key) && depth + 1 < keys.len() {
                return Err(CliError::Config(format!("unknown config key `{}`", keys[..=depth].join("."))));
            }
            if depth + 1 == keys.len() {
                obj.insert(key.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*key).expect("checked above");
        }
        *self = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("override `{spec}`: {e}")))?;
        Ok(())
    }

    /// Points every seeded component at `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.synthetic.seed = seed;
        self.data.split_seed = seed;
        self.fgrbm.train.seed = seed;
        self.features.train.seed = seed;
        self.eval.seeds = vec![seed];
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.data.synthetic.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.preprocess.lcn.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.distance.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.fgrbm.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.fgrbm.hidden == 0 || self.fgrbm.hidden_grid.is_empty() || self.fgrbm.hidden_grid.contains(&0) {
            return bad("fgrbm.hidden and fgrbm.hidden_grid must be positive and nonempty".into());
        }
        if self.features.kinds.is_empty() || self.features.sizes.is_empty() || self.features.sizes.contains(&0) {
            return bad("features.kinds and features.sizes must be nonempty and positive".into());
        }
        if self.features.kind != FeatureKind::Identity && self.features.size == 0 {
            return bad("features.size must be positive".into());
        }
        if self.eval.modes.is_empty() || self.eval.seeds.is_empty() || self.eval.k_grid.is_empty() {
            return bad("eval.modes, eval.seeds, and eval.k_grid must be nonempty".into());
        }
        if self.eval.k == 0 || self.eval.k_grid.contains(&0) {
            return bad("K must be at least 1".into());
        }
        if self.eval.missing_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("eval.missing_rates must lie in [0, 1)".into());
        }
        Ok(())
    }
}
