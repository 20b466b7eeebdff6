use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Top-K principal subspace of a data set. `components` rows are orthonormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub components: Array2<f64>,
    /// Eigenvalues of the sample covariance for the retained components.
    pub variances: Array1<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("PCA input", self.input_dim(), x.len())?;
        Ok(self.components.dot(&(&x - &self.mean)))
    }

    pub fn decode(&self, code: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("PCA code", self.n_components(), code.len())?;
        Ok(self.components.t().dot(&code) + &self.mean)
    }

    /// Mean squared reconstruction error over the rows of `data`.
    pub fn reconstruction_error(&self, data: ArrayView2<f64>) -> Result<f64> {
        check_len("PCA input", self.input_dim(), data.ncols())?;
        let centered = &data - &self.mean;
        let recon = centered.dot(&self.components.t()).dot(&self.components);
        Ok((&centered - &recon).mapv(|d| d * d).sum() / data.nrows() as f64)
    }
}

/// Fits PCA by eigendecomposition of the sample covariance. Components are
/// ordered by decreasing eigenvalue; equal eigenvalues keep the solver's
/// order. Each component's largest-magnitude entry is made positive.
pub fn pca_fit(data: ArrayView2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = data.dim();
    if k == 0 {
        return Err(Error::invalid("PCA needs at least one component"));
    }
    if k > d {
        return Err(Error::invalid(format!("PCA asked for {k} components of {d}-dimensional data")));
    }
    if n < k + 1 {
        return Err(Error::invalid(format!("PCA with {k} components needs at least {} rows, got {n}", k + 1)));
    }
    let mean = data.mean_axis(Axis(0)).expect("nonempty");
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let cov = DMatrix::from_fn(d, d, |r, c| cov[[r, c]]);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::zeros((k, d));
    let mut variances = Array1::zeros(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            components[[row, c]] = sign * col[c];
        }
        variances[row] = eig.eigenvalues[idx].max(0.0);
    }
    Ok(PcaModel {
        mean,
        components,
        variances,
    })
}
