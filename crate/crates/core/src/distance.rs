//! Transforming distance.
//!
//! A source image is pushed through the learned transformation
//! `t(x, σ(z))` and compared to the target in feature space. The logits `z`
//! are chosen by momentum descent on
//!
//! ```text
//! L = D + λ R
//! D = ‖f(t(x_a, h_a)) − f(x_b)‖            (single)
//!   = ‖f(t(x_a, h_a)) − f(t(x_b, h_b))‖    (dual)
//! R = F(t(x_a, h_a); x_a) [+ F(t(x_b, h_b); x_b)]
//! ```
//!
//! and the reported distance is `D` at the best iterate seen.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::features::FeatureSpace;
use crate::math::{sigmoid, sq_dist};
use crate::model::FgrbmParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Single,
    Dual,
}

impl DistanceMode {
    pub fn code_count(self) -> usize {
        match self {
            DistanceMode::Single => 1,
            DistanceMode::Dual => 2,
        }
    }
}

impl std::fmt::Display for DistanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceMode::Single => "single",
            DistanceMode::Dual => "dual",
        })
    }
}

/// Starting point for the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodeInit {
    /// `z⁰ = a(x_source, x_target)`, the model's own inferred code.
    #[default]
    Inferred,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    pub mode: DistanceMode,
    pub lambda: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub init: CodeInit,
    /// Keep `t(x_a, h_a)` for every iterate in the record.
    pub record_images: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            mode: DistanceMode::Single,
            lambda: 1.0,
            iterations: 30,
            step_size: 0.1,
            momentum: 0.9,
            init: CodeInit::Inferred,
            record_images: false,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        Ok(())
    }
}

/// Real-valued logits of a relaxed hidden vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformCode {
    pub z: Array1<f64>,
}

impl TransformCode {
    pub fn new(z: Array1<f64>) -> Self {
        TransformCode { z }
    }

    pub fn zeros(m: usize) -> Self {
        TransformCode { z: Array1::zeros(m) }
    }

    /// `h = sigmoid(z)`.
    pub fn h(&self) -> Array1<f64> {
        self.z.mapv(sigmoid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub total: f64,
    pub distance: f64,
    pub regularizer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRecord {
    pub d_star: f64,
    pub best_iteration: usize,
    pub codes: Vec<TransformCode>,
    /// `(L, D, R)` at every iterate, `iterations + 1` entries.
    pub cost_trajectory: Vec<CostTerms>,
    /// `t(x_a, h_a)` at every iterate when requested.
    pub transformed_trajectory: Option<Vec<Array1<f64>>>,
}

impl DistanceRecord {
    pub fn best_cost(&self) -> CostTerms {
        self.cost_trajectory[self.best_iteration]
    }

    pub fn initial_cost(&self) -> CostTerms {
        self.cost_trajectory[0]
    }
}

/// One transformed image together with the cached source factors.
struct Side<'a> {
    x: ArrayView1<'a, f64>,
    fx: Array1<f64>,
}

struct Evaluation {
    terms: CostTerms,
    grads: Vec<Array1<f64>>,
    transformed: Array1<f64>,
}

/// Fixed inputs of one distance problem.
struct Problem<'a> {
    model: &'a FgrbmParams,
    feature: &'a FeatureSpace,
    sides: Vec<Side<'a>>,
    /// `f(x_b)` in single mode.
    target_feature: Option<Array1<f64>>,
    lambda: f64,
}

impl<'a> Problem<'a> {
    fn new(
        model: &'a FgrbmParams,
        feature: &'a FeatureSpace,
        x_a: ArrayView1<'a, f64>,
        x_b: ArrayView1<'a, f64>,
        mode: DistanceMode,
        lambda: f64,
    ) -> Result<Self> {
        if model.source_dim() != model.target_dim() {
            return Err(Error::invalid(format!(
                "transforming distance needs I = J, model has I={} J={}",
                model.source_dim(),
                model.target_dim()
            )));
        }
        check_len("second image", model.target_dim(), x_b.len())?;
        let side_a = Side {
            x: x_a,
            fx: model.source_factors(x_a)?,
        };
        let (sides, target_feature) = match mode {
            DistanceMode::Single => (vec![side_a], Some(feature.encode(x_b)?)),
            DistanceMode::Dual => {
                let side_b = Side {
                    x: x_b,
                    fx: model.source_factors(x_b)?,
                };
                (vec![side_a, side_b], None)
            }
        };
        Ok(Problem {
            model,
            feature,
            sides,
            target_feature,
            lambda,
        })
    }

    fn check_codes(&self, codes: &[TransformCode]) -> Result<()> {
        if codes.len() != self.sides.len() {
            return Err(Error::invalid(format!(
                "{} mode needs {} code(s), got {}",
                if self.sides.len() == 1 { "single" } else { "dual" },
                self.sides.len(),
                codes.len()
            )));
        }
        for code in codes {
            check_len("transform code", self.model.hidden_dim(), code.z.len())?;
        }
        Ok(())
    }

    fn evaluate(&self, codes: &[TransformCode], with_grad: bool) -> Result<Evaluation> {
        self.check_codes(codes)?;
        let p = self.model;
        let hs: Vec<Array1<f64>> = codes.iter().map(TransformCode::h).collect();
        let ts: Vec<Array1<f64>> = self
            .sides
            .iter()
            .zip(&hs)
            .map(|(side, h)| {
                let fh = p.u.t().dot(h);
                p.transform_from_factors(side.fx.view(), fh.view())
            })
            .collect();

        let mut feats = Vec::with_capacity(ts.len());
        let mut jacs = Vec::with_capacity(ts.len());
        for t in &ts {
            let (f, j) = self.feature.encode_with_jacobian(t.view())?;
            feats.push(f);
            jacs.push(j);
        }
        let other: Vec<&Array1<f64>> = match &self.target_feature {
            Some(fb) => vec![fb],
            None => vec![&feats[1], &feats[0]],
        };
        let distance = sq_dist(feats[0].view(), other[0].view()).sqrt();

        let mut regularizer = 0.0;
        let mut reg_grads = Vec::with_capacity(ts.len());
        for (side, t) in self.sides.iter().zip(&ts) {
            let (f, g) = p.free_energy_grad_target_from_factors(side.fx.view(), t.view());
            regularizer += f;
            reg_grads.push(g);
        }
        let terms = CostTerms {
            total: distance + self.lambda * regularizer,
            distance,
            regularizer,
        };

        let mut grads = Vec::new();
        if with_grad {
            for k in 0..ts.len() {
                // ∂L/∂t_k, with a zero subgradient for D at D = 0.
                let mut gt = reg_grads[k].clone() * self.lambda;
                if distance > 0.0 {
                    let own_minus_other = &feats[k] - other[k];
                    gt.scaled_add(1.0 / distance, &jacs[k].vjp(own_minus_other.view()));
                }
                let fx = &self.sides[k].fx;
                let gh = p.u.dot(&(fx * &p.w.t().dot(&gt)));
                grads.push(gh * &hs[k].mapv(|h| h * (1.0 - h)));
            }
        }
        Ok(Evaluation {
            terms,
            grads,
            transformed: ts.into_iter().next().expect("at least one side"),
        })
    }

    fn initial_codes(&self, init: CodeInit, x_b: ArrayView1<f64>) -> Result<Vec<TransformCode>> {
        let m = self.model.hidden_dim();
        Ok(match init {
            CodeInit::Zeros => vec![TransformCode::zeros(m); self.sides.len()],
            CodeInit::Inferred => match self.sides.as_slice() {
                [a] => vec![TransformCode::new(self.model.hidden_preactivation(a.x, x_b)?)],
                [a, b] => vec![
                    TransformCode::new(self.model.hidden_preactivation(a.x, b.x)?),
                    TransformCode::new(self.model.hidden_preactivation(b.x, a.x)?),
                ],
                _ => unreachable!("one or two sides"),
            },
        })
    }
}

/// `D` for the given codes.
pub fn distance_term(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    codes: &[TransformCode],
    mode: DistanceMode,
) -> Result<f64> {
    let problem = Problem::new(model, feature, x_a, x_b, mode, 0.0)?;
    Ok(problem.evaluate(codes, false)?.terms.distance)
}

/// `R`: the free energy of each transformed image given its own source.
pub fn regularizer(
    model: &FgrbmParams,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    codes: &[TransformCode],
    mode: DistanceMode,
) -> Result<f64> {
    let problem = Problem::new(model, &FeatureSpace::Identity, x_a, x_b, mode, 0.0)?;
    Ok(problem.evaluate(codes, false)?.terms.regularizer)
}

/// `(L, D, R)` with `L = D + λR`.
pub fn cost(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    codes: &[TransformCode],
    cfg: &DistanceConfig,
) -> Result<CostTerms> {
    let problem = Problem::new(model, feature, x_a, x_b, cfg.mode, cfg.lambda)?;
    Ok(problem.evaluate(codes, false)?.terms)
}

/// `∂L/∂z` for each code.
pub fn cost_grad(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    codes: &[TransformCode],
    cfg: &DistanceConfig,
) -> Result<Vec<Array1<f64>>> {
    let problem = Problem::new(model, feature, x_a, x_b, cfg.mode, cfg.lambda)?;
    Ok(problem.evaluate(codes, true)?.grads)
}

/// Runs exactly `cfg.iterations` momentum steps on the logits and returns
/// the iterate with the lowest cost (the initial point included).
pub fn optimize_code(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    cfg: &DistanceConfig,
) -> Result<DistanceRecord> {
    cfg.validate()?;
    let problem = Problem::new(model, feature, x_a, x_b, cfg.mode, cfg.lambda)?;
    let mut codes = problem.initial_codes(cfg.init, x_b)?;
    let mut velocity: Vec<Array1<f64>> = codes.iter().map(|c| Array1::zeros(c.z.len())).collect();

    let mut trajectory = Vec::with_capacity(cfg.iterations + 1);
    let mut images = cfg.record_images.then(|| Vec::with_capacity(cfg.iterations + 1));
    let mut best: Option<(usize, f64, Vec<TransformCode>)> = None;

    for it in 0..=cfg.iterations {
        let eval = problem.evaluate(&codes, it < cfg.iterations)?;
        let terms = eval.terms;
        if !(terms.total.is_finite() && terms.distance.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: it,
                detail: format!("non-finite cost (L={}, D={}, R={})", terms.total, terms.distance, terms.regularizer),
            });
        }
        trajectory.push(terms);
        if let Some(imgs) = images.as_mut() {
            imgs.push(eval.transformed);
        }
        if best.as_ref().is_none_or(|(_, l, _)| terms.total < *l) {
            best = Some((it, terms.total, codes.clone()));
        }
        if it == cfg.iterations {
            break;
        }
        for ((code, vel), g) in codes.iter_mut().zip(velocity.iter_mut()).zip(&eval.grads) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure {
                    iteration: it,
                    detail: "non-finite gradient".into(),
                });
            }
            vel.zip_mut_with(g, |v, &gi| *v = cfg.momentum * *v - cfg.step_size * gi);
            code.z += &*vel;
        }
    }

    let (best_iteration, _, codes) = best.expect("at least one iterate");
    Ok(DistanceRecord {
        d_star: trajectory[best_iteration].distance,
        best_iteration,
        codes,
        cost_trajectory: trajectory,
        transformed_trajectory: images,
    })
}

/// `D*(x_a, x_b)`.
pub fn transforming_distance(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    x_a: ArrayView1<f64>,
    x_b: ArrayView1<f64>,
    cfg: &DistanceConfig,
) -> Result<f64> {
    Ok(optimize_code(model, feature, x_a, x_b, cfg)?.d_star)
}

/// `D*(source_k, target)` for every row of `sources`, optimized
/// independently and in parallel.
pub fn batch_distances(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    sources: ArrayView2<f64>,
    target: ArrayView1<f64>,
    cfg: &DistanceConfig,
) -> Result<Vec<f64>> {
    if sources.nrows() == 0 {
        return Err(Error::invalid("batch_distances needs at least one source"));
    }
    (0..sources.nrows())
        .into_par_iter()
        .map(|k| {
            transforming_distance(model, feature, sources.row(k), target, cfg).map_err(|e| Error::Pair {
                index: k,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Sequential reference for [`batch_distances`].
pub fn batch_distances_sequential(
    model: &FgrbmParams,
    feature: &FeatureSpace,
    sources: ArrayView2<f64>,
    target: ArrayView1<f64>,
    cfg: &DistanceConfig,
) -> Result<Vec<f64>> {
    if sources.nrows() == 0 {
        return Err(Error::invalid("batch_distances needs at least one source"));
    }
    sources
        .rows()
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            transforming_distance(model, feature, row, target, cfg).map_err(|e| Error::Pair {
                index: k,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use ndarray::{array, Array2};

    fn unit_model() -> FgrbmParams {
        let mut p = FgrbmParams::zeros(1, 1, 1, 1);
        p.v[[0, 0]] = 1.0;
        p.w[[0, 0]] = 1.0;
        p.u[[0, 0]] = 1.0;
        p
    }

    fn logit(h: f64) -> f64 {
        (h / (1.0 - h)).ln()
    }

    #[test]
    fn hand_computed_single_distances() {
        let p = unit_model();
        let x = array![2.0];
        let d = |h: f64| {
            let code = TransformCode::new(array![logit(h)]);
            distance_term(&p, &FeatureSpace::Identity, x.view(), x.view(), &[code], DistanceMode::Single).unwrap()
        };
        // h = 1 is the limit of large logits.
        let saturated = distance_term(
            &p,
            &FeatureSpace::Identity,
            x.view(),
            x.view(),
            &[TransformCode::new(array![60.0])],
            DistanceMode::Single,
        )
        .unwrap();
        assert!(saturated < 1e-12);
        assert!((d(0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn code_count_must_match_mode() {
        let p = unit_model();
        let x = array![1.0];
        let one = [TransformCode::zeros(1)];
        let err = distance_term(&p, &FeatureSpace::Identity, x.view(), x.view(), &one, DistanceMode::Dual);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let two = [TransformCode::zeros(1), TransformCode::zeros(1)];
        let err = regularizer(&p, x.view(), x.view(), &two, DistanceMode::Single);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_model_regularizer() {
        let p = FgrbmParams::zeros(3, 3, 4, 8);
        let x = array![1.0, 2.0, 3.0];
        let codes = [TransformCode::new(array![0.3, -1.0, 2.0, 0.0])];
        let r = regularizer(&p, x.view(), x.view(), &codes, DistanceMode::Single).unwrap();
        assert!((r + 4.0 * 2f64.ln()).abs() < 1e-12);

        let dual = [codes[0].clone(), codes[0].clone()];
        let r2 = regularizer(&p, x.view(), x.view(), &dual, DistanceMode::Dual).unwrap();
        assert_eq!(r2, 2.0 * r);
    }

    #[test]
    fn cost_is_distance_plus_weighted_regularizer() {
        let p = init_params(4, 4, 3, 6, 0.5, 2).unwrap();
        let xa = array![0.1, -0.4, 0.9, 0.3];
        let xb = array![-0.2, 0.5, 0.1, 0.8];
        let codes = [TransformCode::new(array![0.2, -0.7, 1.1])];
        for lambda in [0.0, 0.5, 1.0, 3.0] {
            let cfg = DistanceConfig { lambda, ..Default::default() };
            let t = cost(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &codes, &cfg).unwrap();
            assert!((t.total - t.distance - lambda * t.regularizer).abs() < 1e-12);
            if lambda == 0.0 {
                assert_eq!(t.total, t.distance);
            }
        }
    }

    #[test]
    fn saturated_logits_kill_the_gradient() {
        let p = init_params(4, 4, 3, 6, 0.5, 2).unwrap();
        let xa = array![0.1, -0.4, 0.9, 0.3];
        let xb = array![-0.2, 0.5, 0.1, 0.8];
        let codes = [TransformCode::new(array![50.0, -50.0, 50.0])];
        let g = cost_grad(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &codes, &DistanceConfig::default()).unwrap();
        assert!(g[0].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn scalar_chain_rule() {
        // t = σ(z) x_a, D = |t − x_b|, dD/dz = sign(t − x_b) x_a σ'(z).
        let p = unit_model();
        let cfg = DistanceConfig { lambda: 0.0, ..Default::default() };
        for &(xa, xb, z) in &[(2.0, 0.5, 0.3), (2.0, 1.9, -0.4), (-1.5, 0.7, 1.2)] {
            let codes = [TransformCode::new(array![z])];
            let g = cost_grad(&p, &FeatureSpace::Identity, array![xa].view(), array![xb].view(), &codes, &cfg).unwrap();
            let s = sigmoid(z);
            let expected = (s * xa - xb).signum() * xa * s * (1.0 - s);
            assert!((g[0][0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_iterations_returns_initial_point() {
        let p = init_params(4, 4, 3, 6, 0.5, 2).unwrap();
        let xa = array![0.1, -0.4, 0.9, 0.3];
        let xb = array![-0.2, 0.5, 0.1, 0.8];
        let cfg = DistanceConfig { iterations: 0, ..Default::default() };
        let rec = optimize_code(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &cfg).unwrap();
        assert_eq!(rec.cost_trajectory.len(), 1);
        assert_eq!(rec.best_iteration, 0);
        let init = [TransformCode::new(p.hidden_preactivation(xa.view(), xb.view()).unwrap())];
        let d0 = distance_term(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &init, DistanceMode::Single).unwrap();
        assert_eq!(rec.d_star, d0);
    }

    #[test]
    fn trajectory_length_and_best_seen() {
        let p = init_params(5, 5, 4, 8, 0.6, 3).unwrap();
        let xa = array![0.1, -0.4, 0.9, 0.3, 1.0];
        let xb = array![-0.2, 0.5, 0.1, 0.8, -1.0];
        for mode in [DistanceMode::Single, DistanceMode::Dual] {
            let cfg = DistanceConfig { mode, iterations: 12, record_images: true, ..Default::default() };
            let rec = optimize_code(&p, &FeatureSpace::Identity, xa.view(), xb.view(), &cfg).unwrap();
            assert_eq!(rec.cost_trajectory.len(), 13);
            assert_eq!(rec.transformed_trajectory.as_ref().unwrap().len(), 13);
            assert!(rec.best_cost().total <= rec.initial_cost().total);
            assert_eq!(rec.d_star, rec.best_cost().distance);
            assert_eq!(rec.codes.len(), mode.code_count());
        }
    }

    #[test]
    fn non_finite_cost_names_the_iteration() {
        let mut p = init_params(2, 2, 2, 2, 0.5, 3).unwrap();
        p.b[0] = f64::INFINITY;
        let x = array![1.0, 0.0];
        let err = optimize_code(&p, &FeatureSpace::Identity, x.view(), x.view(), &DistanceConfig::default());
        assert!(matches!(err, Err(Error::NumericalFailure { iteration: 0, .. })));
    }

    #[test]
    fn batch_of_one_and_duplicates() {
        let p = init_params(4, 4, 3, 6, 0.5, 2).unwrap();
        let row = array![0.1, -0.4, 0.9, 0.3];
        let target = array![-0.2, 0.5, 0.1, 0.8];
        let cfg = DistanceConfig::default();
        let single = transforming_distance(&p, &FeatureSpace::Identity, row.view(), target.view(), &cfg).unwrap();
        let one = Array2::from_shape_vec((1, 4), row.to_vec()).unwrap();
        let batch = batch_distances(&p, &FeatureSpace::Identity, one.view(), target.view(), &cfg).unwrap();
        assert_eq!(batch, vec![single]);

        let dup = Array2::from_shape_fn((3, 4), |(_, c)| row[c]);
        let out = batch_distances(&p, &FeatureSpace::Identity, dup.view(), target.view(), &cfg).unwrap();
        assert!(out.iter().all(|&d| d == single));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let p = init_params(2, 2, 2, 2, 0.5, 3).unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        let t = array![0.0, 1.0];
        assert!(batch_distances(&p, &FeatureSpace::Identity, empty.view(), t.view(), &DistanceConfig::default()).is_err());
    }
}
