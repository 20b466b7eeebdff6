//! Gaussian-Bernoulli factored gated RBM.
//!
//! The model relates a source image `x` (length `I`), a target image `y`
//! (length `J`) and binary hidden units `h` (length `M`) through `N` factors:
//!
//! ```text
//! E(y, h; x) = ½ Σ_j (y_j − b_j)² − Σ_n (Σ_i v_in x_i)(Σ_j w_jn y_j)(Σ_m u_mn h_m) − Σ_m c_m h_m
//! F(y; x)    = ½ Σ_j (y_j − b_j)² − Σ_m softplus(a_m),
//! a_m        = Σ_n u_mn (Σ_i v_in x_i)(Σ_j w_jn y_j) + c_m
//! ```
//!
//! The visible variance is fixed at one, so `E[y | x, h]` is the transform
//! `t(x, h) = W (Vᵀx ∘ Uᵀh) + b`.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    cd_update, cd_update_with_negatives, train, CdStats, EpochStats, NegativePhase, PairBatch,
    TrainConfig, TrainOutcome,
};

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math::{sigmoid, softplus};

/// All model tensors. Also used as the container for parameter-shaped
/// gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgrbmParams {
    /// Source filters, I×N.
    pub v: Array2<f64>,
    /// Target filters, J×N.
    pub w: Array2<f64>,
    /// Hidden filters, M×N.
    pub u: Array2<f64>,
    /// Target biases, J.
    pub b: Array1<f64>,
    /// Hidden biases, M.
    pub c: Array1<f64>,
}

impl FgrbmParams {
    pub fn zeros(i: usize, j: usize, m: usize, n: usize) -> Self {
        FgrbmParams {
            v: Array2::zeros((i, n)),
            w: Array2::zeros((j, n)),
            u: Array2::zeros((m, n)),
            b: Array1::zeros(j),
            c: Array1::zeros(m),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.source_dim(), self.target_dim(), self.hidden_dim(), self.factor_dim())
    }

    pub fn source_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn factor_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn tensors(&self) -> [&[f64]; 5] {
        [
            self.v.as_slice().expect("standard layout"),
            self.w.as_slice().expect("standard layout"),
            self.u.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.c.as_slice().expect("standard layout"),
        ]
    }

    /// Sum of squared entries across all tensors.
    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum()
    }

    /// `Vᵀx`, the source projection onto the factors.
    pub fn source_factors(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("source image", self.source_dim(), x.len())?;
        Ok(self.v.t().dot(&x))
    }

    /// `Wᵀy`, the target projection onto the factors.
    pub fn target_factors(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("target image", self.target_dim(), y.len())?;
        Ok(self.w.t().dot(&y))
    }

    /// `Uᵀh`, the hidden projection onto the factors.
    pub fn hidden_factors(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("hidden vector", self.hidden_dim(), h.len())?;
        Ok(self.u.t().dot(&h))
    }

    /// `a = U (Vᵀx ∘ Wᵀy) + c` from already projected factors.
    pub(crate) fn preactivation_from_factors(
        &self,
        fx: ArrayView1<f64>,
        fy: ArrayView1<f64>,
    ) -> Array1<f64> {
        let prod = &fx * &fy;
        self.u.dot(&prod) + &self.c
    }

    /// `t = W (fx ∘ fh) + b` from already projected factors.
    pub(crate) fn transform_from_factors(
        &self,
        fx: ArrayView1<f64>,
        fh: ArrayView1<f64>,
    ) -> Array1<f64> {
        let prod = &fx * &fh;
        self.w.dot(&prod) + &self.b
    }

    pub fn hidden_preactivation(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let fx = self.source_factors(x)?;
        let fy = self.target_factors(y)?;
        Ok(self.preactivation_from_factors(fx.view(), fy.view()))
    }

    pub fn energy(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        if let Some(bad) = h.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid(format!("hidden state must be binary, found {bad}")));
        }
        let fx = self.source_factors(x)?;
        let fy = self.target_factors(y)?;
        let fh = self.hidden_factors(h)?;
        let quad = 0.5 * sq_diff(y, self.b.view());
        let interaction: f64 = Zip::from(&fx).and(&fy).and(&fh).fold(0.0, |acc, a, b, c| acc + a * b * c);
        Ok(quad - interaction - self.c.dot(&h))
    }

    pub fn free_energy(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        let a = self.hidden_preactivation(x, y)?;
        Ok(0.5 * sq_diff(y, self.b.view()) - a.iter().map(|&v| softplus(v)).sum::<f64>())
    }

    /// `p(h_m = 1 | x, y)`.
    pub fn infer_hidden(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.hidden_preactivation(x, y)?.mapv(sigmoid))
    }

    /// Conditional mean of the target given the source and a (possibly
    /// relaxed) hidden vector.
    pub fn transform(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        let fx = self.source_factors(x)?;
        let fh = self.hidden_factors(h)?;
        Ok(self.transform_from_factors(fx.view(), fh.view()))
    }

    /// Draws `y ~ Normal(t(x, h), I)`.
    pub fn sample_target<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<f64>,
        h: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let mut mean = self.transform(x, h)?;
        for v in mean.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += z;
        }
        Ok(mean)
    }

    /// Draws a binary hidden state from `p(h | x, y)`.
    pub fn sample_hidden<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        let p = self.infer_hidden(x, y)?;
        Ok(p.mapv(|q| bernoulli(q, rng)))
    }

    /// `∂F(y; x)/∂θ` for every parameter tensor.
    pub fn free_energy_grad(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<FgrbmParams> {
        let fx = self.source_factors(x)?;
        let fy = self.target_factors(y)?;
        let s = self.preactivation_from_factors(fx.view(), fy.view()).mapv(sigmoid);
        // g_n = Σ_m σ(a_m) u_mn
        let g = self.u.t().dot(&s);
        let gy = &g * &fy;
        let gx = &g * &fx;
        let prod = &fx * &fy;

        let v = outer(x, gy.view()).mapv(|q| -q);
        let w = outer(y, gx.view()).mapv(|q| -q);
        let u = outer(s.view(), prod.view()).mapv(|q| -q);
        let b = &self.b - &y;
        let c = -s;
        Ok(FgrbmParams { v, w, u, b, c })
    }

    /// `∂F(y; x)/∂y = (y − b) − W (Vᵀx ∘ Uᵀσ(a))`.
    pub(crate) fn free_energy_grad_target_from_factors(
        &self,
        fx: ArrayView1<f64>,
        y: ArrayView1<f64>,
    ) -> (f64, Array1<f64>) {
        let fy = self.w.t().dot(&y);
        let a = self.preactivation_from_factors(fx, fy.view());
        let centered = &y - &self.b;
        let f = 0.5 * centered.dot(&centered) - a.iter().map(|&v| softplus(v)).sum::<f64>();
        let s = a.mapv(sigmoid);
        let g = self.u.t().dot(&s);
        let grad = centered - self.w.dot(&(&g * &fx));
        (f, grad)
    }
}

/// Draws `V`, `W`, `U` i.i.d. from `Normal(0, scale²)`; biases start at zero.
pub fn init_params(i: usize, j: usize, m: usize, n: usize, scale: f64, seed: u64) -> Result<FgrbmParams> {
    if i == 0 || j == 0 || m == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "model dimensions must be positive, got I={i} J={j} M={m} N={n}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("init scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows, cols| {
        Array2::from_shape_simple_fn((rows, cols), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let v = draw(i, n);
    let w = draw(j, n);
    let u = draw(m, n);
    Ok(FgrbmParams {
        v,
        w,
        u,
        b: Array1::zeros(j),
        c: Array1::zeros(m),
    })
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn sq_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    crate::math::sq_dist(a, b)
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(r, c)| a[r] * b[c])
}
