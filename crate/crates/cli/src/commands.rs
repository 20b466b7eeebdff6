//! Subcommand implementations. Each returns the lines it reports on stdout.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::{Array2, Axis};

use transdist::data::{generate, load_dataset, preprocess, save_dataset, ImageMeta, LabeledDataset, PixelFormat, Split, MANIFEST_NAME};
use transdist::distance::{optimize_code, DistanceConfig, DistanceMode};
use transdist::features::{cae_fit, encode_rows, pca_fit, FeatureKind, FeatureSpace};
use transdist::knn::{
    augment_database, distance_matrix, reduced_rows, report_from_matrix, DistanceMatrix, EvalDeps, EvalMode, EvalReport,
    NeighborDatabase,
};
use transdist::model::{init_params, load_checkpoint, save_checkpoint, train, FgrbmParams, PairBatch};
use transdist::scenario::{apply_split, training_pairs, TRAINING_SPLITS};

use crate::artifacts::{append_csv, content_hash, dataset_digest, write_file, Layout, RunLog};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CROSSVAL_HEADER: &str = "stage,kind,size,hidden,accuracy,chosen";
pub const STRIP_HEADER: &str = "panel,role,iteration,l2_to_target,cost,distance,regularizer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    #[value(name = "k")]
    K,
    #[value(name = "missing_rate", alias = "missing-rate")]
    MissingRate,
}

/// State shared by one command invocation.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
    pub log: RunLog,
}

impl Ctx {
    fn load_lcn(&mut self) -> CliResult<LabeledDataset> {
        let dir = self.layout.lcn();
        let manifest = dir.join(MANIFEST_NAME);
        if !manifest.exists() {
            return Err(CliError::missing("preprocessed dataset", manifest, "run `transdist preprocess` first"));
        }
        let ds = load_dataset(&dir)?;
        self.log.input_digest(&dir.display().to_string(), &dataset_digest(&ds));
        Ok(ds)
    }

    fn feature_path(&self, ds: &LabeledDataset, kind: FeatureKind, size: usize) -> PathBuf {
        let f = &self.cfg.features;
        let hash = match kind {
            FeatureKind::Cae => content_hash(&dataset_digest(ds), &(kind, size, f.contraction, &f.train)),
            _ => content_hash(&dataset_digest(ds), &(kind, size)),
        };
        self.layout.feature_checkpoint(kind, size, &hash)
    }

    fn train_feature(&mut self, ds: &LabeledDataset, kind: FeatureKind, size: usize) -> CliResult<(FeatureSpace, Option<PathBuf>)> {
        if kind == FeatureKind::Identity {
            return Ok((FeatureSpace::Identity, None));
        }
        let data = ds.images.select(Axis(0), &ds.indices_in(&TRAINING_SPLITS));
        let space = match kind {
            FeatureKind::Pca => FeatureSpace::Pca(pca_fit(data.view(), size)?),
            _ => {
                let (model, losses) = cae_fit(data.view(), size, self.cfg.features.contraction, &self.cfg.features.train)?;
                if losses.last().is_some_and(|l| !l.is_finite()) {
                    return Err(CliError::Numerical(format!("CAE loss diverged for size {size}")));
                }
                FeatureSpace::Cae(model)
            }
        };
        let path = self.feature_path(ds, kind, size);
        std::fs::create_dir_all(self.layout.features())?;
        space.save(&path)?;
        self.log.output(&path);
        // Reload so callers see exactly what is on disk.
        Ok((FeatureSpace::load(&path)?, Some(path)))
    }

    /// The trained feature space of the configured kind and size.
    fn require_feature(&mut self, ds: &LabeledDataset) -> CliResult<FeatureSpace> {
        let (kind, size) = (self.cfg.features.kind, self.cfg.features.size);
        if kind == FeatureKind::Identity {
            return Ok(FeatureSpace::Identity);
        }
        let path = self.feature_path(ds, kind, size);
        if !path.exists() {
            return Err(CliError::missing("feature checkpoint", path, "run `transdist train-features` first"));
        }
        self.log.input_file(&path)?;
        Ok(FeatureSpace::load(&path)?)
    }

    fn cached_feature(&mut self, ds: &LabeledDataset, kind: FeatureKind, size: usize) -> CliResult<FeatureSpace> {
        let path = self.feature_path(ds, kind, size);
        if kind != FeatureKind::Identity && path.exists() {
            self.log.input_file(&path)?;
            return Ok(FeatureSpace::load(&path)?);
        }
        Ok(self.train_feature(ds, kind, size)?.0)
    }

    fn model_hash(&self, ds: &LabeledDataset, hidden: usize) -> String {
        let f = &self.cfg.fgrbm;
        let recipe = (
            hidden,
            f.factors.unwrap_or(2 * hidden),
            f.init_scale,
            f.max_delta,
            f.include_self,
            &f.train,
        );
        content_hash(&dataset_digest(ds), &recipe)
    }

    fn train_model(&mut self, ds: &LabeledDataset, hidden: usize) -> CliResult<(FgrbmParams, PathBuf, f64, f64)> {
        let f = self.cfg.fgrbm.clone();
        let pairs = training_pairs(ds, f.max_delta, f.include_self)?;
        let batch = PairBatch::from_pairs(ds.images.view(), &pairs.pairs)?;
        let d = ds.pixels();
        let params = init_params(d, d, hidden, f.factors.unwrap_or(2 * hidden), f.init_scale, f.train.seed)?;
        let outcome = train(params, &batch, &f.train)?;
        if !outcome.params.is_finite() {
            return Err(CliError::Numerical(format!("fgRBM parameters diverged (M = {hidden})")));
        }
        let hash = self.model_hash(ds, hidden);
        let path = self.layout.fgrbm_checkpoint(hidden, &hash);
        std::fs::create_dir_all(self.layout.fgrbm())?;
        save_checkpoint(&outcome.params, &path)?;
        let mut history = String::from("epoch,recon_error,free_energy\n");
        for e in &outcome.history {
            history.push_str(&format!("{},{},{}\n", e.epoch, e.recon_error, e.free_energy));
        }
        let hist_path = self.layout.fgrbm_history(hidden, &hash);
        write_file(&hist_path, history)?;
        self.log.output(&path);
        self.log.output(&hist_path);
        let first = outcome.history.first().map_or(f64::NAN, |e| e.recon_error);
        let last = outcome.history.last().map_or(f64::NAN, |e| e.recon_error);
        Ok((load_checkpoint(&path)?, path, first, last))
    }

    fn require_model(&mut self, ds: &LabeledDataset) -> CliResult<FgrbmParams> {
        let hidden = self.cfg.fgrbm.hidden;
        let path = self.layout.fgrbm_checkpoint(hidden, &self.model_hash(ds, hidden));
        if !path.exists() {
            return Err(CliError::missing("fgRBM checkpoint", path, "run `transdist train-fgrbm` first"));
        }
        self.log.input_file(&path)?;
        Ok(load_checkpoint(&path)?)
    }

    fn cached_model(&mut self, ds: &LabeledDataset, hidden: usize) -> CliResult<FgrbmParams> {
        let path = self.layout.fgrbm_checkpoint(hidden, &self.model_hash(ds, hidden));
        if path.exists() {
            self.log.input_file(&path)?;
            return Ok(load_checkpoint(&path)?);
        }
        Ok(self.train_model(ds, hidden)?.0)
    }

    fn database(&self, ds: &LabeledDataset, split: Split) -> CliResult<NeighborDatabase> {
        let db = NeighborDatabase::from_dataset(ds, &[split], self.cfg.eval.labels);
        if db.is_empty() {
            return Err(CliError::Config(format!("the dataset has no `{}` images", split.as_str())));
        }
        Ok(db)
    }
}

pub fn gen(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    if ctx.cfg.data.dir.is_some() {
        return Err(CliError::Config("data.dir names an existing dataset; `gen` only renders data.synthetic".into()));
    }
    let ds = generate(&ctx.cfg.data.synthetic)?;
    let dir = ctx.layout.raw();
    save_dataset(&ds, &dir)?;
    ctx.log.output(dir.join(MANIFEST_NAME));
    Ok(vec![format!("wrote {} images to {}", ds.len(), dir.display())])
}

pub fn preprocess_cmd(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    let src = ctx.cfg.data.dir.clone().unwrap_or_else(|| ctx.layout.raw());
    let manifest = src.join(MANIFEST_NAME);
    if !manifest.exists() {
        return Err(CliError::missing("raw dataset", manifest, "run `transdist gen` or set data.dir"));
    }
    let raw = load_dataset(&src)?;
    ctx.log.input_digest(&src.display().to_string(), &dataset_digest(&raw));
    let normalized = preprocess(&raw, &ctx.cfg.preprocess.lcn, ctx.cfg.preprocess.downsample)?;
    let ds = apply_split(&normalized, ctx.cfg.data.split, ctx.cfg.data.split_seed)?;
    let dir = ctx.layout.lcn();
    save_dataset(&ds, &dir)?;
    ctx.log.output(dir.join(MANIFEST_NAME));
    let counts: Vec<String> = [Split::FeatureTrain, Split::KnnTrain, Split::Validation, Split::Test]
        .iter()
        .map(|&s| format!("{} {}", s.as_str(), ds.count(s)))
        .collect();
    Ok(vec![format!("wrote {} images to {} ({})", ds.len(), dir.display(), counts.join(", "))])
}

pub fn train_features(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    let ds = ctx.load_lcn()?;
    let (kind, size) = (ctx.cfg.features.kind, ctx.cfg.features.size);
    match ctx.train_feature(&ds, kind, size)? {
        (_, Some(path)) => Ok(vec![format!("wrote {kind} features ({size}) to {}", path.display())]),
        (_, None) => Ok(vec!["pixel features need no training".into()]),
    }
}

pub fn train_fgrbm(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    let ds = ctx.load_lcn()?;
    let hidden = ctx.cfg.fgrbm.hidden;
    let (_, path, first, last) = ctx.train_model(&ds, hidden)?;
    Ok(vec![format!(
        "wrote {} (reconstruction error {first:.4} -> {last:.4})",
        path.display()
    )])
}

/// Query×database matrices per (mode, seed); seed only matters for the
/// augmented mode, so the others are computed once.
struct Matrices<'a> {
    db: &'a NeighborDatabase,
    queries: &'a NeighborDatabase,
    deps: EvalDeps<'a>,
    cache: HashMap<(EvalMode, u64), DistanceMatrix>,
}

impl Matrices<'_> {
    fn get(&mut self, mode: EvalMode, seed: u64) -> CliResult<&DistanceMatrix> {
        let key = (mode, if mode == EvalMode::Augmented { seed } else { 0 });
        if !self.cache.contains_key(&key) {
            let m = distance_matrix(self.db, self.queries.examples.view(), mode, &self.deps, seed)?;
            self.cache.insert(key, m);
        }
        Ok(&self.cache[&key])
    }

    fn report(&mut self, mode: EvalMode, k: usize, missing_rate: f64, seed: u64) -> CliResult<EvalReport> {
        let ids: Vec<usize> = self.queries.meta.iter().map(|m| m.id).collect();
        let truth = self.queries.labels();
        let n = self.db.len();
        let db_ids: Vec<usize> = self.db.meta.iter().map(|m| m.id).collect();
        let full = self.get(mode, seed)?;
        let report = if missing_rate > 0.0 {
            let keep: Vec<usize> = reduced_rows(n, missing_rate, seed)?.iter().map(|&r| db_ids[r]).collect();
            report_from_matrix(&full.restrict_to_ids(&keep), &ids, &truth, k, missing_rate, seed)?
        } else {
            report_from_matrix(full, &ids, &truth, k, missing_rate, seed)?
        };
        Ok(report)
    }
}

struct EvalInputs {
    ds: LabeledDataset,
    feature: FeatureSpace,
    model: Option<FgrbmParams>,
    db: NeighborDatabase,
    queries: NeighborDatabase,
}

fn eval_inputs(ctx: &mut Ctx, modes: &[EvalMode], query_split: Split) -> CliResult<EvalInputs> {
    let ds = ctx.load_lcn()?;
    let feature = ctx.require_feature(&ds)?;
    let model = if modes.iter().any(|&m| m != EvalMode::Regular) {
        Some(ctx.require_model(&ds)?)
    } else {
        None
    };
    let db = ctx.database(&ds, Split::KnnTrain)?;
    let queries = ctx.database(&ds, query_split)?;
    Ok(EvalInputs {
        ds,
        feature,
        model,
        db,
        queries,
    })
}

pub fn eval(ctx: &mut Ctx, modes: &[EvalMode]) -> CliResult<Vec<String>> {
    let modes = if modes.is_empty() { ctx.cfg.eval.modes.clone() } else { modes.to_vec() };
    let inputs = eval_inputs(ctx, &modes, Split::Test)?;
    let cfg = ctx.cfg.clone();
    let mut matrices = Matrices {
        db: &inputs.db,
        queries: &inputs.queries,
        deps: EvalDeps {
            feature: &inputs.feature,
            model: inputs.model.as_ref(),
            distance: &cfg.distance,
            augment: &cfg.eval.augment,
            direction: cfg.eval.direction,
        },
        cache: HashMap::new(),
    };
    let k = cfg.eval.k;
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for &mode in &modes {
        for &seed in &cfg.eval.seeds {
            let report = matrices.report(mode, k, 0.0, seed)?;
            let path = ctx.layout.eval().join(format!("queries-{mode}-k{k}-s{seed}.csv"));
            write_file(&path, report.per_query_csv())?;
            ctx.log.output(path);
            rows.push(report.summary_csv_row());
            lines.push(format!(
                "{mode} K={k} seed={seed}: accuracy {:.4} ({}/{})",
                report.accuracy, report.correct, report.total
            ));
        }
    }
    let summary = ctx.layout.eval().join(SUMMARY_FILE);
    append_csv(&summary, EvalReport::SUMMARY_HEADER, &rows)?;
    ctx.log.output(summary);
    drop(inputs.ds);
    Ok(lines)
}

pub fn sweep(ctx: &mut Ctx, axis: SweepAxis) -> CliResult<Vec<String>> {
    let cfg = ctx.cfg.clone();
    let inputs = eval_inputs(ctx, &cfg.eval.modes, Split::Test)?;
    let mut matrices = Matrices {
        db: &inputs.db,
        queries: &inputs.queries,
        deps: EvalDeps {
            feature: &inputs.feature,
            model: inputs.model.as_ref(),
            distance: &cfg.distance,
            augment: &cfg.eval.augment,
            direction: cfg.eval.direction,
        },
        cache: HashMap::new(),
    };
    let mut rows = Vec::new();
    for &mode in &cfg.eval.modes {
        for &seed in &cfg.eval.seeds {
            match axis {
                SweepAxis::K => {
                    for &k in &cfg.eval.k_grid {
                        rows.push(matrices.report(mode, k, 0.0, seed)?.summary_csv_row());
                    }
                }
                SweepAxis::MissingRate => {
                    for &rate in &cfg.eval.missing_rates {
                        rows.push(matrices.report(mode, 1, rate, seed)?.summary_csv_row());
                    }
                }
            }
        }
    }
    let name = match axis {
        SweepAxis::K => "sweep-k.csv",
        SweepAxis::MissingRate => "sweep-missing_rate.csv",
    };
    let path = ctx.layout.eval().join(name);
    append_csv(&path, EvalReport::SUMMARY_HEADER, &rows)?;
    ctx.log.output(&path);
    Ok(vec![format!("appended {} rows to {}", rows.len(), path.display())])
}

pub fn augment(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    let ds = ctx.load_lcn()?;
    let model = ctx.require_model(&ds)?;
    let db = ctx.database(&ds, Split::KnnTrain)?;
    let a = &ctx.cfg.eval.augment;
    let seed = ctx.cfg.eval.seeds[0];
    let big = augment_database(&db, &model, a.factor, a.chain_iters, seed)?;
    let meta: Vec<ImageMeta> = big.meta.iter().map(|m| ds.meta[m.id]).collect();
    let n = big.len();
    let out = LabeledDataset::new(ds.height, ds.width, PixelFormat::Float32, big.examples.clone(), meta, vec![Split::KnnTrain; n])?;
    let dir = ctx.layout.augmented();
    save_dataset(&out, &dir)?;
    let mut sources = String::from("row,source_row,sample\n");
    for (r, m) in big.meta.iter().enumerate() {
        sources.push_str(&format!("{r},{},{}\n", m.id, m.sample));
    }
    write_file(&dir.join("sources.csv"), sources)?;
    ctx.log.output(dir.join(MANIFEST_NAME));
    Ok(vec![format!("wrote {n} entries ({} originals x {}) to {}", db.len(), a.factor, dir.display())])
}

#[derive(Debug, Clone, PartialEq)]
struct Cell {
    stage: &'static str,
    kind: FeatureKind,
    size: usize,
    hidden: usize,
    accuracy: f64,
}

/// Highest accuracy; ties go to the earliest cell (cells are listed
/// smallest model first).
fn pick(cells: &[Cell]) -> usize {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.accuracy > cells[best].accuracy {
            best = i;
        }
    }
    best
}

pub fn crossval(ctx: &mut Ctx) -> CliResult<Vec<String>> {
    let ds = ctx.load_lcn()?;
    let db = ctx.database(&ds, Split::KnnTrain)?;
    let val = ctx.database(&ds, Split::Validation)?;
    let cfg = ctx.cfg.clone();
    let k = cfg.eval.k;
    let ids: Vec<usize> = val.meta.iter().map(|m| m.id).collect();
    let truth = val.labels();

    let mut grid: Vec<(FeatureKind, usize)> = Vec::new();
    let mut sizes = cfg.features.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    for &kind in &cfg.features.kinds {
        if kind == FeatureKind::Identity {
            if !grid.contains(&(kind, ds.pixels())) {
                grid.push((kind, ds.pixels()));
            }
            continue;
        }
        for &size in &sizes {
            if !grid.contains(&(kind, size)) {
                grid.push((kind, size));
            }
        }
    }
    grid.sort_by_key(|&(_, size)| size);

    let mut feature_cells = Vec::new();
    for &(kind, size) in &grid {
        let feature = ctx.cached_feature(&ds, kind, size)?;
        let fdb = encode_rows(&feature, db.examples.view())?;
        let fval = encode_rows(&feature, val.examples.view())?;
        let values = Array2::from_shape_fn((val.len(), db.len()), |(q, c)| transdist::math::l2(fval.row(q), fdb.row(c)));
        let matrix = DistanceMatrix {
            mode: EvalMode::Regular,
            db: db.clone(),
            values,
        };
        let report = report_from_matrix(&matrix, &ids, &truth, k, 0.0, 0)?;
        feature_cells.push(Cell {
            stage: "features",
            kind,
            size,
            hidden: 0,
            accuracy: report.accuracy,
        });
    }

    let mut hidden = cfg.fgrbm.hidden_grid.clone();
    hidden.sort_unstable();
    hidden.dedup();
    let single = DistanceConfig {
        mode: DistanceMode::Single,
        ..cfg.distance.clone()
    };
    let mut model_cells = Vec::new();
    for &m in &hidden {
        let model = ctx.cached_model(&ds, m)?;
        let deps = EvalDeps {
            feature: &FeatureSpace::Identity,
            model: Some(&model),
            distance: &single,
            augment: &cfg.eval.augment,
            direction: cfg.eval.direction,
        };
        let matrix = distance_matrix(&db, val.examples.view(), EvalMode::Transforming, &deps, 0)?;
        let report = report_from_matrix(&matrix, &ids, &truth, k, 0.0, 0)?;
        model_cells.push(Cell {
            stage: "fgrbm",
            kind: FeatureKind::Identity,
            size: ds.pixels(),
            hidden: m,
            accuracy: report.accuracy,
        });
    }

    let fbest = pick(&feature_cells);
    let mbest = pick(&model_cells);
    let mut csv = format!("{CROSSVAL_HEADER}\n");
    for (cells, best) in [(&feature_cells, fbest), (&model_cells, mbest)] {
        for (i, c) in cells.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{},{},{}\n", c.stage, c.kind, c.size, c.hidden, c.accuracy, i == best));
        }
    }
    let path = ctx.layout.eval().join("crossval.csv");
    write_file(&path, csv)?;
    ctx.log.output(&path);
    let f = &feature_cells[fbest];
    let m = &model_cells[mbest];
    Ok(vec![
        format!("chosen features: {}-{} (validation accuracy {:.4})", f.kind, f.size, f.accuracy),
        format!("chosen fgRBM: M={} (validation accuracy {:.4})", m.hidden, m.accuracy),
    ])
}

/// Iterates shown between the source and the best panel: `frames` evenly
/// spaced iterates starting at the initial one, none when there are no
/// iterations.
pub fn strip_frames(iterations: usize, frames: usize) -> Vec<usize> {
    let n = frames.min(iterations);
    (0..n).map(|i| i * iterations / n).collect()
}

/// Default pair: the first test image as target and the database image of
/// the same identity with the largest transform offset as source.
fn default_pair(ds: &LabeledDataset) -> CliResult<(usize, usize)> {
    let target = *ds
        .indices_in(&[Split::Test])
        .first()
        .ok_or_else(|| CliError::Config("the dataset has no test images".into()))?;
    let tm = ds.meta[target];
    let source = ds
        .indices_in(&[Split::KnnTrain])
        .into_iter()
        .filter(|&k| ds.meta[k].identity == tm.identity)
        .max_by(|&a, &b| {
            let da = (ds.meta[a].transform_param - tm.transform_param).abs();
            let db = (ds.meta[b].transform_param - tm.transform_param).abs();
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .ok_or_else(|| CliError::Config(format!("identity {} has no database image", tm.identity)))?;
    Ok((source, target))
}

pub fn viz_strip(ctx: &mut Ctx, pair: Option<(usize, usize)>, frames: usize) -> CliResult<Vec<String>> {
    let ds = ctx.load_lcn()?;
    let model = ctx.require_model(&ds)?;
    let feature = ctx.require_feature(&ds)?;
    let (source, target) = match pair {
        Some((s, t)) => {
            if s >= ds.len() || t >= ds.len() {
                return Err(CliError::Config(format!("pair ({s}, {t}) is out of range for {} images", ds.len())));
            }
            (s, t)
        }
        None => default_pair(&ds)?,
    };
    let cfg = DistanceConfig {
        record_images: true,
        ..ctx.cfg.distance.clone()
    };
    let x = ds.image(source);
    let y = ds.image(target);
    let rec = optimize_code(&model, &feature, x, y, &cfg)?;
    let images = rec.transformed_trajectory.as_ref().expect("images were requested");

    // (role, iteration, pixels)
    let mut panels: Vec<(&str, Option<usize>, ndarray::Array1<f64>)> = vec![("source", None, x.to_owned())];
    for it in strip_frames(cfg.iterations, frames) {
        panels.push(("intermediate", Some(it), images[it].clone()));
    }
    panels.push(("best", Some(rec.best_iteration), images[rec.best_iteration].clone()));
    panels.push(("target", None, y.to_owned()));

    let (h, w) = (ds.height, ds.width);
    let lo = panels.iter().flat_map(|p| p.2.iter().copied()).fold(f64::INFINITY, f64::min);
    let hi = panels.iter().flat_map(|p| p.2.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut strip = Array2::zeros((h, w * panels.len()));
    let mut csv = format!("{STRIP_HEADER}\n");
    for (p, (role, it, img)) in panels.iter().enumerate() {
        for r in 0..h {
            for c in 0..w {
                strip[[r, p * w + c]] = (img[r * w + c] - lo) / span;
            }
        }
        let l2 = transdist::math::l2(img.view(), y);
        let (cost, dist, reg) = match it {
            Some(i) => {
                let t = rec.cost_trajectory[*i];
                (t.total.to_string(), t.distance.to_string(), t.regularizer.to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        let it = it.map(|i| i.to_string()).unwrap_or_default();
        csv.push_str(&format!("{p},{role},{it},{l2},{cost},{dist},{reg}\n"));
    }
    let stem = format!("strip-{source}-{target}");
    let pgm = ctx.layout.eval().join(format!("{stem}.pgm"));
    std::fs::create_dir_all(ctx.layout.eval())?;
    transdist::data::write_pgm(&pgm, strip.view())?;
    let table = ctx.layout.eval().join(format!("{stem}.csv"));
    write_file(&table, csv)?;
    ctx.log.output(&pgm);
    ctx.log.output(&table);
    Ok(vec![format!(
        "wrote {} panels ({}x{}) to {}; best iterate {} with D* {:.4} (initial D {:.4})",
        panels.len(),
        w * panels.len(),
        h,
        pgm.display(),
        rec.best_iteration,
        rec.d_star,
        rec.initial_cost().distance
    )])
}
