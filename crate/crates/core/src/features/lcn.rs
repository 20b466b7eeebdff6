//! Local contrast normalization.
//!
//! Subtractive step: remove a Gaussian-weighted local mean. Divisive step:
//! divide by `max(local std, mean of local stds, epsilon)`. The window is
//! truncated at the borders and its weights renormalized there.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LcnConfig {
    pub kernel_size: usize,
    pub epsilon: f64,
}

impl Default for LcnConfig {
    fn default() -> Self {
        LcnConfig {
            kernel_size: 9,
            epsilon: 1e-4,
        }
    }
}

impl LcnConfig {
    pub fn with_kernel(kernel_size: usize) -> Self {
        LcnConfig {
            kernel_size,
            ..Default::default()
        }
    }

    // Negated comparison so NaN is rejected.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "LCN kernel size must be odd and positive, got {}",
                self.kernel_size
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("LCN epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn gaussian_window(size: usize) -> Array2<f64> {
    let sigma = size as f64 / 4.0;
    let r = (size / 2) as f64;
    Array2::from_shape_fn((size, size), |(a, b)| {
        let dy = a as f64 - r;
        let dx = b as f64 - r;
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    })
}

/// Weighted local average of `f(q, p)` over the window around each pixel
/// `p`, with weights renormalized over the in-bounds part of the window.
fn local_average(
    shape: (usize, usize),
    window: &Array2<f64>,
    f: impl Fn((usize, usize), (usize, usize)) -> f64,
) -> Array2<f64> {
    let (h, w) = shape;
    let r = (window.nrows() / 2) as isize;
    Array2::from_shape_fn(shape, |(py, px)| {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for dy in -r..=r {
            let qy = py as isize + dy;
            if qy < 0 || qy >= h as isize {
                continue;
            }
            for dx in -r..=r {
                let qx = px as isize + dx;
                if qx < 0 || qx >= w as isize {
                    continue;
                }
                let k = window[[(dy + r) as usize, (dx + r) as usize]];
                acc += k * f((qy as usize, qx as usize), (py, px));
                norm += k;
            }
        }
        acc / norm
    })
}

pub fn lcn(image: ArrayView2<f64>, cfg: &LcnConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let (h, w) = image.dim();
    if h < cfg.kernel_size || w < cfg.kernel_size {
        return Err(Error::invalid(format!(
            "LCN kernel {} larger than {h}x{w} image",
            cfg.kernel_size
        )));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("LCN input contains non-finite pixels"));
    }
    let window = gaussian_window(cfg.kernel_size);
    // x_p − mean_p written as a weighted sum of differences, so a constant
    // patch yields exactly zero.
    let centered = local_average((h, w), &window, |q, p| image[p] - image[q]);
    let local_std = local_average((h, w), &window, |q, _| centered[q] * centered[q]).mapv(f64::sqrt);
    let mean_std = local_std.mean().unwrap_or(0.0);
    let mut out = centered;
    out.zip_mut_with(&local_std, |c, &s| {
        *c /= s.max(mean_std).max(cfg.epsilon);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_maps_to_zero() {
        let img = Array2::from_elem((12, 10), 3.7);
        let out = lcn(img.view(), &LcnConfig::with_kernel(5)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_oversized_and_even_kernels() {
        let img = Array2::<f64>::zeros((4, 4));
        assert!(lcn(img.view(), &LcnConfig::with_kernel(5)).is_err());
        assert!(lcn(img.view(), &LcnConfig::with_kernel(2)).is_err());
    }

    #[test]
    fn bright_pixel_gives_center_surround() {
        let mut img = Array2::<f64>::zeros((11, 11));
        img[[5, 5]] = 1.0;
        let out = lcn(img.view(), &LcnConfig::with_kernel(5)).unwrap();
        assert!(out[[5, 5]] > 0.0);
        for (dy, dx) in [(-1, 0), (1, 0), (0, 1), (0, -1), (2, 2), (-2, 1)] {
            let v = out[[(5 + dy) as usize, (5 + dx) as usize]];
            assert!(v < 0.0, "offset ({dy},{dx}) = {v}");
        }
        assert_eq!(out[[0, 0]], 0.0);
        assert_eq!(out[[5, 8]], 0.0);
    }

    #[test]
    fn second_pass_changes_little() {
        // Holds at the default kernel; small kernels (3, 5) drift by 11-18%.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LcnConfig::default();
        for size in [16, 16, 32, 32, 48] {
            let img = Array2::from_shape_simple_fn((size, size), || rng.random::<f64>());
            let once = lcn(img.view(), &cfg).unwrap();
            let twice = lcn(once.view(), &cfg).unwrap();
            let rms = |a: &Array2<f64>| (a.mapv(|v| v * v).mean().unwrap()).sqrt();
            let diff = &twice - &once;
            let ratio = rms(&diff) / rms(&once);
            assert!(ratio < 0.1, "relative change {ratio}");
        }
    }
}
