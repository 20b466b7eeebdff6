//! Contrastive-divergence training.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{bernoulli, FgrbmParams};
use crate::error::{check_len, Error, Result};
use crate::math::{sigmoid, softplus};

/// How the negative-phase target is produced from a sampled hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativePhase {
    /// Use the conditional mean `t(x, h)`.
    #[default]
    MeanField,
    /// Draw `y ~ Normal(t(x, h), I)`.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub cd_steps: usize,
    pub negative_phase: NegativePhase,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 200,
            batch_size: 100,
            weight_decay: 1e-4,
            cd_steps: 1,
            negative_phase: NegativePhase::MeanField,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be nonnegative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if self.cd_steps == 0 {
            return Err(Error::invalid("cd_steps must be positive"));
        }
        Ok(())
    }
}

/// Source/target rows, one training pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    sources: Array2<f64>,
    targets: Array2<f64>,
}

impl PairBatch {
    pub fn new(sources: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if sources.nrows() != targets.nrows() {
            return Err(Error::invalid(format!(
                "pair batch has {} sources but {} targets",
                sources.nrows(),
                targets.nrows()
            )));
        }
        if sources.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("pair batch contains non-finite values"));
        }
        Ok(PairBatch { sources, targets })
    }

    /// Gathers rows of `images` by index pairs.
    pub fn from_pairs(images: ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = images.nrows();
        if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::invalid(format!("pair ({a}, {b}) out of range for {n} images")));
        }
        let src: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let tgt: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        Self::new(images.select(Axis(0), &src), images.select(Axis(0), &tgt))
    }

    pub fn len(&self) -> usize {
        self.sources.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sources(&self) -> ArrayView2<'_, f64> {
        self.sources.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }

    fn select(&self, rows: &[usize]) -> PairBatch {
        PairBatch {
            sources: self.sources.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdStats {
    /// Mean over the batch of `‖y⁺ − t(x, h⁻)‖²`.
    pub recon_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon_error: f64,
    pub free_energy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: FgrbmParams,
    pub history: Vec<EpochStats>,
}

fn check_batch(p: &FgrbmParams, batch: &PairBatch, velocity: &FgrbmParams) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("cd_update needs a nonempty batch"));
    }
    check_len("batch source width", p.source_dim(), batch.sources.ncols())?;
    check_len("batch target width", p.target_dim(), batch.targets.ncols())?;
    if velocity.v.dim() != p.v.dim() || velocity.w.dim() != p.w.dim() || velocity.u.dim() != p.u.dim() {
        return Err(Error::invalid("velocity shapes do not match the parameters"));
    }
    Ok(())
}

/// Batched `Σ_rows ∂F(y; x)/∂θ`.
fn summed_free_energy_grad(p: &FgrbmParams, fx: &Array2<f64>, xs: ArrayView2<f64>, ys: ArrayView2<f64>) -> FgrbmParams {
    let fy = ys.dot(&p.w);
    let prod = fx * &fy;
    let mut s = prod.dot(&p.u.t());
    s += &p.c;
    s.mapv_inplace(sigmoid);
    let g = s.dot(&p.u);
    let gy = &g * &fy;
    let gx = &g * fx;

    let v = -xs.t().dot(&gy);
    let w = -ys.t().dot(&gx);
    let u = -s.t().dot(&prod);
    let rows = ys.nrows() as f64;
    let b = &p.b * rows - ys.sum_axis(Axis(0));
    let c = -s.sum_axis(Axis(0));
    FgrbmParams { v, w, u, b, c }
}

/// One CD step with the negative-phase chain (`cd_steps` alternations of
/// hidden sampling and target reconstruction). Updates `p` and `velocity`
/// in place.
pub fn cd_update<R: Rng + ?Sized>(
    p: &mut FgrbmParams,
    batch: &PairBatch,
    cfg: &TrainConfig,
    rng: &mut R,
    velocity: &mut FgrbmParams,
) -> Result<CdStats> {
    check_batch(p, batch, velocity)?;
    let fx = batch.sources.dot(&p.v);
    let mut y = batch.targets.clone();
    let mut mean = y.clone();
    for _ in 0..cfg.cd_steps {
        let fy = y.dot(&p.w);
        let mut a = (&fx * &fy).dot(&p.u.t());
        a += &p.c;
        let h = a.mapv(|q| bernoulli(sigmoid(q), rng));
        let fh = h.dot(&p.u);
        mean = (&fx * &fh).dot(&p.w.t());
        mean += &p.b;
        y = match cfg.negative_phase {
            NegativePhase::MeanField => mean.clone(),
            NegativePhase::Sample => mean.mapv(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + z
            }),
        };
    }
    let recon_error = (&batch.targets - &mean).mapv(|d| d * d).sum() / batch.len() as f64;
    apply_update(p, batch, &fx, y.view(), cfg, velocity)?;
    Ok(CdStats { recon_error })
}

/// CD update with caller-supplied negative targets. The reported
/// reconstruction error is measured against `negatives`.
pub fn cd_update_with_negatives(
    p: &mut FgrbmParams,
    batch: &PairBatch,
    negatives: ArrayView2<f64>,
    cfg: &TrainConfig,
    velocity: &mut FgrbmParams,
) -> Result<CdStats> {
    check_batch(p, batch, velocity)?;
    if negatives.dim() != batch.targets.dim() {
        return Err(Error::invalid("negative targets must match the batch target shape"));
    }
    let fx = batch.sources.dot(&p.v);
    let recon_error = (&batch.targets - &negatives).mapv(|d| d * d).sum() / batch.len() as f64;
    apply_update(p, batch, &fx, negatives, cfg, velocity)?;
    Ok(CdStats { recon_error })
}

fn apply_update(
    p: &mut FgrbmParams,
    batch: &PairBatch,
    fx: &Array2<f64>,
    negatives: ArrayView2<f64>,
    cfg: &TrainConfig,
    velocity: &mut FgrbmParams,
) -> Result<()> {
    let pos = summed_free_energy_grad(p, fx, batch.sources.view(), batch.targets.view());
    let neg = summed_free_energy_grad(p, fx, batch.sources.view(), negatives);
    let scale = 1.0 / batch.len() as f64;
    let lr = cfg.learning_rate;
    let mom = cfg.momentum;
    let wd = cfg.weight_decay;

    let step2 = |vel: &mut Array2<f64>, theta: &mut Array2<f64>, gp: &Array2<f64>, gn: &Array2<f64>| {
        Zip::from(vel).and(&mut *theta).and(gp).and(gn).for_each(|v, t, &a, &b| {
            *v = mom * *v - lr * ((a - b) * scale + wd * *t);
            *t += *v;
        });
    };
    step2(&mut velocity.v, &mut p.v, &pos.v, &neg.v);
    step2(&mut velocity.w, &mut p.w, &pos.w, &neg.w);
    step2(&mut velocity.u, &mut p.u, &pos.u, &neg.u);

    let step1 = |vel: &mut Array1<f64>, theta: &mut Array1<f64>, gp: &Array1<f64>, gn: &Array1<f64>| {
        Zip::from(vel).and(&mut *theta).and(gp).and(gn).for_each(|v, t, &a, &b| {
            *v = mom * *v - lr * (a - b) * scale;
            *t += *v;
        });
    };
    step1(&mut velocity.b, &mut p.b, &pos.b, &neg.b);
    step1(&mut velocity.c, &mut p.c, &pos.c, &neg.c);

    if !p.is_finite() {
        return Err(Error::NumericalFailure {
            iteration: 0,
            detail: "parameters became non-finite during a CD update".into(),
        });
    }
    Ok(())
}

/// Mean free energy of the targets of `pairs`.
pub(crate) fn mean_free_energy(p: &FgrbmParams, pairs: &PairBatch) -> f64 {
    let fx = pairs.sources.dot(&p.v);
    let fy = pairs.targets.dot(&p.w);
    let mut a = (&fx * &fy).dot(&p.u.t());
    a += &p.c;
    let soft: f64 = a.iter().map(|&q| softplus(q)).sum();
    let centered = &pairs.targets - &p.b;
    let quad = 0.5 * centered.mapv(|d| d * d).sum();
    (quad - soft) / pairs.len() as f64
}

/// Runs `cfg.epochs` epochs of minibatch CD over shuffled pairs.
pub fn train(params: FgrbmParams, pairs: &PairBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("training needs at least one pair"));
    }
    let mut p = params;
    let mut velocity = p.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut err_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = pairs.select(chunk);
            let stats = cd_update(&mut p, &batch, cfg, &mut rng, &mut velocity).map_err(|e| match e {
                Error::NumericalFailure { detail, .. } => Error::NumericalFailure { iteration: epoch, detail },
                other => other,
            })?;
            err_sum += stats.recon_error * chunk.len() as f64;
        }
        history.push(EpochStats {
            epoch,
            recon_error: err_sum / pairs.len() as f64,
            free_energy: mean_free_energy(&p, pairs),
        });
    }
    Ok(TrainOutcome { params: p, history })
}
