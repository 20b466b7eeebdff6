//! Tied-weight contractive autoencoder with sigmoid hidden units and a
//! linear decoder.
//!
//! Per-example loss: `‖x − (Wᵀh + b_dec)‖² + λ Σ_m (h_m(1−h_m))² ‖W_m‖²`
//! with `h = sigmoid(W x + b_enc)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeModel {
    /// Encoder weights, M_f×D. The decoder uses the transpose.
    pub weights: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub decoder_bias: Array1<f64>,
    pub contraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for CaeTrainConfig {
    fn default() -> Self {
        CaeTrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 50,
            batch_size: 50,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaeLoss {
    pub reconstruction: f64,
    pub penalty: f64,
}

impl CaeLoss {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.penalty
    }
}

pub struct CaeGrads {
    pub weights: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub decoder_bias: Array1<f64>,
}

impl CaeModel {
    pub fn zeros(input_dim: usize, hidden: usize, contraction: f64) -> Self {
        CaeModel {
            weights: Array2::zeros((hidden, input_dim)),
            encoder_bias: Array1::zeros(hidden),
            decoder_bias: Array1::zeros(input_dim),
            contraction,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("CAE input", self.input_dim(), x.len())?;
        Ok((self.weights.dot(&x) + &self.encoder_bias).mapv(sigmoid))
    }

    pub fn decode(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("CAE code", self.hidden_dim(), h.len())?;
        Ok(self.weights.t().dot(&h) + &self.decoder_bias)
    }

    /// `λ Σ_m (h_m(1−h_m))² ‖W_m‖²` at input `x`, the squared Frobenius
    /// norm of the encoder Jacobian scaled by the contraction weight.
    pub fn penalty(&self, x: ArrayView1<f64>) -> Result<f64> {
        let h = self.encode(x)?;
        let norms = self.weights.map_axis(Axis(1), |r| r.dot(&r));
        Ok(self.contraction * h.iter().zip(norms.iter()).map(|(&hm, &n)| (hm * (1.0 - hm)).powi(2) * n).sum::<f64>())
    }

    /// Mean loss over the rows of `data` and its gradient.
    pub fn loss_and_grad(&self, data: ArrayView2<f64>) -> Result<(CaeLoss, CaeGrads)> {
        check_len("CAE input", self.input_dim(), data.ncols())?;
        let rows = data.nrows() as f64;
        let mut h = data.dot(&self.weights.t());
        h += &self.encoder_bias;
        h.mapv_inplace(sigmoid);
        let mut err = h.dot(&self.weights);
        err += &self.decoder_bias;
        err -= &data;
        let reconstruction = err.mapv(|e| e * e).sum() / rows;

        let norms = self.weights.map_axis(Axis(1), |r| r.dot(&r));
        let slope = h.mapv(|v| v * (1.0 - v));
        let slope_sq = slope.mapv(|s| s * s);
        let penalty = self.contraction * slope_sq.dot(&norms).sum() / rows;

        // ∂/∂pre-activation: reconstruction path plus penalty path.
        let mut delta = err.dot(&self.weights.t()) * 2.0;
        delta *= &slope;
        Zip::from(delta.rows_mut()).and(h.rows()).for_each(|mut drow, hrow| {
            for ((d, &hm), &n) in drow.iter_mut().zip(hrow.iter()).zip(norms.iter()) {
                let s = hm * (1.0 - hm);
                *d += self.contraction * n * 2.0 * s * s * (1.0 - 2.0 * hm);
            }
        });

        let mut gw = delta.t().dot(&data);
        gw += &(h.t().dot(&err) * 2.0);
        let coef = slope_sq.sum_axis(Axis(0)) * (2.0 * self.contraction);
        Zip::from(gw.rows_mut())
            .and(self.weights.rows())
            .and(&coef)
            .for_each(|mut g, w, &k| g.scaled_add(k, &w));
        gw /= rows;

        let grads = CaeGrads {
            weights: gw,
            encoder_bias: delta.sum_axis(Axis(0)) / rows,
            decoder_bias: err.sum_axis(Axis(0)) * (2.0 / rows),
        };
        Ok((CaeLoss { reconstruction, penalty }, grads))
    }
}

/// Trains a CAE with minibatch momentum descent. Returns the model and the
/// per-epoch mean training loss (evaluated on the full data after each
/// epoch).
pub fn cae_fit(
    data: ArrayView2<f64>,
    hidden: usize,
    contraction: f64,
    cfg: &CaeTrainConfig,
) -> Result<(CaeModel, Vec<f64>)> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::invalid("CAE training data is empty"));
    }
    if hidden == 0 {
        return Err(Error::invalid("CAE needs at least one hidden unit"));
    }
    if !(contraction >= 0.0 && contraction.is_finite()) {
        return Err(Error::invalid(format!("contraction weight must be nonnegative, got {contraction}")));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("CAE batch size must be positive and momentum in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CaeModel::zeros(data.ncols(), hidden, contraction);
    model.weights.mapv_inplace(|_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        cfg.init_scale * z
    });
    model.decoder_bias = data.mean_axis(Axis(0)).expect("nonempty");

    let mut vw = Array2::<f64>::zeros(model.weights.dim());
    let mut vbe = Array1::<f64>::zeros(hidden);
    let mut vbd = Array1::<f64>::zeros(data.ncols());
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            let (_, g) = model.loss_and_grad(batch.view())?;
            let (lr, mom) = (cfg.learning_rate, cfg.momentum);
            Zip::from(&mut vw).and(&mut model.weights).and(&g.weights).for_each(|v, t, &d| {
                *v = mom * *v - lr * d;
                *t += *v;
            });
            Zip::from(&mut vbe).and(&mut model.encoder_bias).and(&g.encoder_bias).for_each(|v, t, &d| {
                *v = mom * *v - lr * d;
                *t += *v;
            });
            Zip::from(&mut vbd).and(&mut model.decoder_bias).and(&g.decoder_bias).for_each(|v, t, &d| {
                *v = mom * *v - lr * d;
                *t += *v;
            });
        }
        let (loss, _) = model.loss_and_grad(data)?;
        if !loss.total().is_finite() {
            return Err(Error::NumericalFailure {
                iteration: epoch,
                detail: "CAE loss became non-finite".into(),
            });
        }
        history.push(loss.total());
    }
    Ok((model, history))
}
