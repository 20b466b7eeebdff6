//! Output layout, content hashes, and run logs.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use transdist::data::{LabeledDataset, PixelFormat};
use transdist::features::FeatureKind;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Directory tree under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("data/raw")
    }

    pub fn lcn(&self) -> PathBuf {
        self.root.join("data/lcn")
    }

    pub fn augmented(&self) -> PathBuf {
        self.root.join("data/augmented")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn fgrbm(&self) -> PathBuf {
        self.root.join("fgrbm")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn feature_checkpoint(&self, kind: FeatureKind, size: usize, hash: &str) -> PathBuf {
        let ext = match kind {
            FeatureKind::Cae => "fcae",
            _ => "fpca",
        };
        self.features().join(format!("{kind}-{size}-{hash}.{ext}"))
    }

    pub fn fgrbm_checkpoint(&self, hidden: usize, hash: &str) -> PathBuf {
        self.fgrbm().join(format!("fgrbm-m{hidden}-{hash}.fgrb"))
    }

    pub fn fgrbm_history(&self, hidden: usize, hash: &str) -> PathBuf {
        self.fgrbm().join(format!("fgrbm-m{hidden}-{hash}.history.csv"))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything that defines a dataset: shape, pixels, labels, splits.
pub fn dataset_digest(ds: &LabeledDataset) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((ds.height as u64).to_le_bytes());
    h.update((ds.width as u64).to_le_bytes());
    h.update([matches!(ds.format, PixelFormat::Float32) as u8]);
    for v in ds.images.iter() {
        h.update(v.to_le_bytes());
    }
    for (m, s) in ds.meta.iter().zip(&ds.splits) {
        h.update((m.identity as u64).to_le_bytes());
        h.update((m.class as u64).to_le_bytes());
        h.update(m.transform_param.to_le_bytes());
        h.update(s.as_str());
    }
    h.finalize().into()
}

/// 12-hex-digit name fragment over a dataset and a serializable recipe.
pub fn content_hash(ds_digest: &[u8; 32], recipe: &impl Serialize) -> String {
    let mut h = Sha256::new();
    h.update(ds_digest);
    h.update(serde_json::to_vec(recipe).expect("recipe serializes"));
    hex(&h.finalize())[..12].to_string()
}

/// Appends rows under a fixed header, writing the header on first use and
/// refusing to mix schemas.
pub fn append_csv(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let fresh = match fs::read_to_string(path) {
        Ok(existing) => {
            let first = existing.lines().next().unwrap_or("");
            if !first.is_empty() && first != header {
                return Err(CliError::Config(format!(
                    "{} has header `{first}`, expected `{header}`",
                    path.display()
                )));
            }
            first.is_empty()
        }
        Err(_) => true,
    };
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Seeds {
    data: u64,
    split: u64,
    features: u64,
    fgrbm: u64,
    eval: Vec<u64>,
}

#[derive(Debug, Serialize)]
struct RunLogRecord<'a> {
    command: &'a str,
    version: &'static str,
    seed: Option<u64>,
    seeds: Seeds,
    config: &'a ExperimentConfig,
    input_hash: String,
    inputs: &'a [String],
    outputs: Vec<String>,
    wall_time_s: f64,
}

/// Collects inputs and outputs of one command and writes its run log.
pub struct RunLog {
    command: String,
    started: Instant,
    hasher: Sha256,
    inputs: Vec<String>,
    outputs: Vec<PathBuf>,
}

impl RunLog {
    pub fn start(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command);
        hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
        RunLog {
            command: command.to_string(),
            started: Instant::now(),
            hasher,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input_digest(&mut self, name: &str, digest: &[u8]) {
        self.hasher.update(name);
        self.hasher.update(digest);
        self.inputs.push(name.to_string());
    }

    pub fn input_file(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        self.input_digest(&path.display().to_string(), &digest);
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(self, layout: &Layout, cfg: &ExperimentConfig, seed: Option<u64>) -> CliResult<PathBuf> {
        let input_hash = hex(&self.hasher.finalize());
        let path = layout.logs().join(format!("{}-{}.json", self.command, &input_hash[..12]));
        let record = RunLogRecord {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            seeds: Seeds {
                data: cfg.data.synthetic.seed,
                split: cfg.data.split_seed,
                features: cfg.features.train.seed,
                fgrbm: cfg.fgrbm.train.seed,
                eval: cfg.eval.seeds.clone(),
            },
            config: cfg,
            input_hash,
            inputs: &self.inputs,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        write_file(&path, serde_json::to_vec_pretty(&record).expect("log serializes"))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_keeps_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        append_csv(&p, "a,b", &["1,2".into()]).unwrap();
        append_csv(&p, "a,b", &["3,4".into()]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n1,2\n3,4\n");
        assert!(matches!(append_csv(&p, "a,c", &[]), Err(CliError::Config(_))));
    }
}
