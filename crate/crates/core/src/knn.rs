//! Regular, transforming, and augmented K-nearest-neighbour classification.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Split};
use crate::distance::{batch_distances, transforming_distance, DistanceConfig};
use crate::error::{check_len, Error, Result};
use crate::features::{encode_rows, FeatureSpace};
use crate::math::l2;
use crate::model::FgrbmParams;

/// Which metadata field is the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    #[default]
    Identity,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    /// Stable id of the originating example.
    pub id: usize,
    pub label: usize,
    /// 0 for an original example, `s` for its `s`-th generated sample.
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDatabase {
    pub examples: Array2<f64>,
    pub meta: Vec<ExampleMeta>,
}

impl NeighborDatabase {
    pub fn new(examples: Array2<f64>, labels: &[usize]) -> Result<Self> {
        if examples.nrows() != labels.len() {
            return Err(Error::invalid("one label per example required"));
        }
        let meta = labels
            .iter()
            .enumerate()
            .map(|(id, &label)| ExampleMeta { id, label, sample: 0 })
            .collect();
        Ok(NeighborDatabase { examples, meta })
    }

    /// Images of the given splits; ids are dataset row indices.
    pub fn from_dataset(ds: &LabeledDataset, splits: &[Split], labels: LabelKind) -> Self {
        let idx = ds.indices_in(splits);
        let meta = idx
            .iter()
            .map(|&k| ExampleMeta {
                id: k,
                label: match labels {
                    LabelKind::Identity => ds.meta[k].identity,
                    LabelKind::Class => ds.meta[k].class,
                },
                sample: 0,
            })
            .collect();
        NeighborDatabase {
            examples: ds.images.select(Axis(0), &idx),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples.ncols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.meta.iter().map(|m| m.label).collect()
    }

    pub fn select(&self, rows: &[usize]) -> NeighborDatabase {
        NeighborDatabase {
            examples: self.examples.select(Axis(0), rows),
            meta: rows.iter().map(|&r| self.meta[r]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Row in the database.
    pub index: usize,
    pub distance: f64,
    pub label: usize,
}

/// Majority vote among the `k` nearest entries of `distances`.
///
/// Neighbours are ranked by distance, equal distances by lower index. Among
/// labels with the same vote count the one owning the nearest neighbour wins.
pub fn vote(distances: &[f64], labels: &[usize], k: usize) -> Result<(usize, Vec<Neighbor>)> {
    if distances.is_empty() {
        return Err(Error::invalid("KNN database is empty"));
    }
    if distances.len() != labels.len() {
        return Err(Error::invalid("one label per distance required"));
    }
    if k == 0 || k > distances.len() {
        return Err(Error::invalid(format!("K must lie in 1..={}, got {k}", distances.len())));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let neighbors: Vec<Neighbor> = order[..k]
        .iter()
        .map(|&i| Neighbor {
            index: i,
            distance: distances[i],
            label: labels[i],
        })
        .collect();
    // (label, votes, rank of its nearest member) in rank order.
    let mut tally: Vec<(usize, usize)> = Vec::new();
    for n in &neighbors {
        match tally.iter_mut().find(|(l, _)| *l == n.label) {
            Some((_, c)) => *c += 1,
            None => tally.push((n.label, 1)),
        }
    }
    let best = tally.iter().map(|&(_, c)| c).max().expect("k >= 1");
    let label = tally.iter().find(|&&(_, c)| c == best).expect("max exists").0;
    Ok((label, neighbors))
}

pub fn knn_classify<F>(db: &NeighborDatabase, query: ArrayView1<f64>, k: usize, distance: F) -> Result<(usize, Vec<Neighbor>)>
where
    F: Fn(ArrayView1<f64>, ArrayView1<f64>) -> Result<f64>,
{
    if db.is_empty() {
        return Err(Error::invalid("KNN database is empty"));
    }
    check_len("query", db.dim(), query.len())?;
    let d = db
        .examples
        .rows()
        .into_iter()
        .map(|row| distance(row, query))
        .collect::<Result<Vec<f64>>>()?;
    vote(&d, &db.labels(), k)
}

/// Which image of a (database, query) pair gets transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The stored example is transformed toward the query.
    #[default]
    DatabaseToQuery,
    QueryToDatabase,
}

/// `D*` from every database example to one query.
pub fn transforming_distances(
    db: &NeighborDatabase,
    query: ArrayView1<f64>,
    model: &FgrbmParams,
    feature: &FeatureSpace,
    cfg: &DistanceConfig,
    direction: Direction,
) -> Result<Vec<f64>> {
    if db.is_empty() {
        return Err(Error::invalid("KNN database is empty"));
    }
    check_len("query", model.target_dim(), query.len())?;
    match direction {
        Direction::DatabaseToQuery => batch_distances(model, feature, db.examples.view(), query, cfg),
        Direction::QueryToDatabase => (0..db.len())
            .into_par_iter()
            .map(|k| {
                transforming_distance(model, feature, query, db.examples.row(k), cfg).map_err(|e| Error::Pair {
                    index: k,
                    source: Box::new(e),
                })
            })
            .collect(),
    }
}

pub fn transforming_knn_classify(
    db: &NeighborDatabase,
    query: ArrayView1<f64>,
    k: usize,
    model: &FgrbmParams,
    feature: &FeatureSpace,
    cfg: &DistanceConfig,
) -> Result<(usize, Vec<Neighbor>)> {
    let d = transforming_distances(db, query, model, feature, cfg, Direction::DatabaseToQuery)?;
    vote(&d, &db.labels(), k)
}

/// Enlarges the database `factor`-fold with Gibbs samples from the model.
///
/// For each example `x` a chain starts at `y = x` and alternates
/// `h ~ p(h | x, y)`, `y ~ Normal(t(x, h), I)`; the state after every
/// `chain_iters` steps is kept, `factor − 1` times. Originals come first,
/// then the samples grouped by example. Each example's chain draws from its
/// own stream keyed by the example id, so the samples of an example do not
/// depend on the rest of the database.
pub fn augment_database(
    db: &NeighborDatabase,
    model: &FgrbmParams,
    factor: usize,
    chain_iters: usize,
    seed: u64,
) -> Result<NeighborDatabase> {
    if factor < 2 {
        return Err(Error::invalid(format!("augmentation factor must be at least 2, got {factor}")));
    }
    if chain_iters == 0 {
        return Err(Error::invalid("chain_iters must be positive"));
    }
    if model.source_dim() != db.dim() || model.target_dim() != db.dim() {
        return Err(Error::invalid(format!(
            "model maps {}→{} pixels but database images have {}",
            model.source_dim(),
            model.target_dim(),
            db.dim()
        )));
    }
    let per_example: Vec<Vec<ndarray::Array1<f64>>> = (0..db.len())
        .into_par_iter()
        .map(|r| -> Result<Vec<ndarray::Array1<f64>>> {
            let x = db.examples.row(r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(db.meta[r].id as u64);
            let mut y = x.to_owned();
            let mut kept = Vec::with_capacity(factor - 1);
            for _ in 1..factor {
                for _ in 0..chain_iters {
                    let h = model.sample_hidden(x, y.view(), &mut rng)?;
                    y = model.sample_target(x, h.view(), &mut rng)?;
                }
                kept.push(y.clone());
            }
            Ok(kept)
        })
        .collect::<Result<_>>()?;

    let n = db.len();
    let mut examples = Array2::zeros((n * factor, db.dim()));
    examples.slice_mut(ndarray::s![..n, ..]).assign(&db.examples);
    let mut meta = db.meta.clone();
    let mut row = n;
    for (r, samples) in per_example.iter().enumerate() {
        for (s, y) in samples.iter().enumerate() {
            examples.row_mut(row).assign(y);
            meta.push(ExampleMeta {
                sample: s + 1,
                ..db.meta[r]
            });
            row += 1;
        }
    }
    Ok(NeighborDatabase { examples, meta })
}

/// Keeps `⌈(1 − missing_rate)·n⌉` uniformly chosen examples, in their
/// original order.
pub fn reduce_database(db: &NeighborDatabase, missing_rate: f64, seed: u64) -> Result<NeighborDatabase> {
    Ok(db.select(&reduced_rows(db.len(), missing_rate, seed)?))
}

pub fn reduced_rows(n: usize, missing_rate: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(Error::invalid(format!("missing rate must lie in [0, 1), got {missing_rate}")));
    }
    let dropped = missing_rate * n as f64;
    let dropped = if (dropped - dropped.round()).abs() < 1e-9 {
        dropped.round()
    } else {
        dropped.floor()
    } as usize;
    let keep = n - dropped;
    if keep == 0 {
        return Err(Error::invalid(format!(
            "missing rate {missing_rate} leaves no examples out of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Regular,
    Transforming,
    Augmented,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Regular => "regular",
            EvalMode::Transforming => "transforming",
            EvalMode::Augmented => "augmented",
        })
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "regular" => Ok(EvalMode::Regular),
            "transforming" => Ok(EvalMode::Transforming),
            "augmented" => Ok(EvalMode::Augmented),
            other => Err(format!("unknown eval mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub factor: usize,
    pub chain_iters: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            factor: 10,
            chain_iters: 100,
        }
    }
}

/// Everything besides the data that an evaluation may need.
#[derive(Debug, Clone, Copy)]
pub struct EvalDeps<'a> {
    pub feature: &'a FeatureSpace,
    pub model: Option<&'a FgrbmParams>,
    pub distance: &'a DistanceConfig,
    pub augment: &'a AugmentConfig,
    pub direction: Direction,
}

/// Query×database distances for one mode. For the augmented mode the
/// columns cover the augmented database, described by `db`.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub mode: EvalMode,
    pub db: NeighborDatabase,
    pub values: Array2<f64>,
}

impl DistanceMatrix {
    /// Restricts the columns to database entries whose originating example
    /// id is in `keep_ids`.
    pub fn restrict_to_ids(&self, keep_ids: &[usize]) -> DistanceMatrix {
        let cols: Vec<usize> = (0..self.db.len()).filter(|&c| keep_ids.contains(&self.db.meta[c].id)).collect();
        DistanceMatrix {
            mode: self.mode,
            db: self.db.select(&cols),
            values: self.values.select(Axis(1), &cols),
        }
    }
}

fn l2_matrix(queries: ArrayView2<f64>, db: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((queries.nrows(), db.nrows()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(queries.axis_iter(Axis(0)))
        .for_each(|(mut row, q)| {
            for (d, x) in row.iter_mut().zip(db.rows()) {
                *d = l2(q, x);
            }
        });
    out
}

pub fn distance_matrix(
    db: &NeighborDatabase,
    queries: ArrayView2<f64>,
    mode: EvalMode,
    deps: &EvalDeps<'_>,
    seed: u64,
) -> Result<DistanceMatrix> {
    if db.is_empty() {
        return Err(Error::invalid("KNN database is empty"));
    }
    if queries.nrows() == 0 {
        return Err(Error::invalid("test set is empty"));
    }
    check_len("query", db.dim(), queries.ncols())?;
    let need_model = || deps.model.ok_or_else(|| Error::invalid(format!("{mode} KNN needs a trained model")));
    match mode {
        EvalMode::Regular => {
            let fdb = encode_rows(deps.feature, db.examples.view())?;
            let fq = encode_rows(deps.feature, queries)?;
            Ok(DistanceMatrix {
                mode,
                db: db.clone(),
                values: l2_matrix(fq.view(), fdb.view()),
            })
        }
        EvalMode::Augmented => {
            let model = need_model()?;
            let big = augment_database(db, model, deps.augment.factor, deps.augment.chain_iters, seed)?;
            let fdb = encode_rows(deps.feature, big.examples.view())?;
            let fq = encode_rows(deps.feature, queries)?;
            Ok(DistanceMatrix {
                mode,
                db: big,
                values: l2_matrix(fq.view(), fdb.view()),
            })
        }
        EvalMode::Transforming => {
            let model = need_model()?;
            let rows = queries
                .rows()
                .into_iter()
                .enumerate()
                .map(|(q, query)| {
                    transforming_distances(db, query, model, deps.feature, deps.distance, deps.direction).map_err(|e| match e {
                        Error::Pair { index, source } => match *source {
                            Error::NumericalFailure { iteration, detail } => Error::NumericalFailure {
                                iteration,
                                detail: format!("query {q}, database entry {index}: {detail}"),
                            },
                            other => Error::invalid(format!("query {q}, database entry {index}: {other}")),
                        },
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let values = Array2::from_shape_fn((queries.nrows(), db.len()), |(r, c)| rows[r][c]);
            Ok(DistanceMatrix {
                mode,
                db: db.clone(),
                values,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: usize,
    pub truth: usize,
    pub predicted: usize,
    /// `(database row, distance)` for the K nearest entries.
    pub neighbors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub k: usize,
    pub missing_rate: f64,
    pub seed: u64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub records: Vec<QueryRecord>,
}

impl EvalReport {
    pub const SUMMARY_HEADER: &'static str = "mode,k,missing_rate,accuracy,seed";

    pub fn summary_csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.mode, self.k, self.missing_rate, self.accuracy, self.seed)
    }

    pub fn per_query_csv(&self) -> String {
        let mut out = String::from("query_id,true,predicted");
        for i in 1..=self.k {
            out.push_str(&format!(",d{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{}", r.query_id, r.truth, r.predicted));
            for (_, d) in &r.neighbors {
                out.push_str(&format!(",{d}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Classifies every query from a precomputed distance matrix.
pub fn report_from_matrix(
    matrix: &DistanceMatrix,
    query_ids: &[usize],
    truth: &[usize],
    k: usize,
    missing_rate: f64,
    seed: u64,
) -> Result<EvalReport> {
    if truth.len() != matrix.values.nrows() || query_ids.len() != truth.len() {
        return Err(Error::invalid("one label and id per query required"));
    }
    if truth.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let labels = matrix.db.labels();
    let mut records = Vec::with_capacity(truth.len());
    let mut correct = 0;
    for (q, row) in matrix.values.rows().into_iter().enumerate() {
        let (predicted, neighbors) = vote(&row.to_vec(), &labels, k)?;
        if predicted == truth[q] {
            correct += 1;
        }
        records.push(QueryRecord {
            query_id: query_ids[q],
            truth: truth[q],
            predicted,
            neighbors: neighbors.iter().map(|n| (n.index, n.distance)).collect(),
        });
    }
    Ok(EvalReport {
        mode: matrix.mode,
        k,
        missing_rate,
        seed,
        correct,
        total: truth.len(),
        accuracy: correct as f64 / truth.len() as f64,
        records,
    })
}

/// Classifies every query of `test` against `db` and reports accuracy.
pub fn evaluate(
    db: &NeighborDatabase,
    test: &NeighborDatabase,
    mode: EvalMode,
    k: usize,
    deps: &EvalDeps<'_>,
    seed: u64,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let matrix = distance_matrix(db, test.examples.view(), mode, deps, seed)?;
    let ids: Vec<usize> = test.meta.iter().map(|m| m.id).collect();
    report_from_matrix(&matrix, &ids, &test.labels(), k, 0.0, seed)
}
