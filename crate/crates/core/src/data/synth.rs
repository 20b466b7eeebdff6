use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ImageMeta, LabeledDataset, PixelFormat, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// In-plane rotation about the image center, parameter in degrees.
    #[default]
    Rotation,
    /// Horizontal shift, parameter in pixels.
    Translation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub image_size: usize,
    pub n_identities: usize,
    pub n_classes: usize,
    pub transform_kind: TransformKind,
    /// Rotation angles (degrees) or shifts (pixels).
    pub params: Vec<f64>,
    /// Standard deviation, in pixels, of the per-identity displacement of
    /// each blob away from its class template.
    pub identity_jitter: f64,
    /// Mean blob width in pixels.
    pub blob_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The `rotshapes-default` scenario.
    fn default() -> Self {
        SyntheticSpec {
            image_size: 16,
            n_identities: 60,
            n_classes: 4,
            transform_kind: TransformKind::Rotation,
            params: (-4..=4).map(|k| 15.0 * k as f64).collect(),
            identity_jitter: 1.0,
            blob_sigma: 1.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 4 {
            return Err(Error::invalid(format!("image_size must be at least 4, got {}", self.image_size)));
        }
        if self.n_classes == 0 || self.n_identities < self.n_classes {
            return Err(Error::invalid(format!(
                "need n_identities >= n_classes >= 1, got {} identities and {} classes",
                self.n_identities, self.n_classes
            )));
        }
        if self.params.is_empty() || self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("transform parameter set must be nonempty and finite"));
        }
        if !(self.identity_jitter >= 0.0 && self.blob_sigma > 0.0) {
            return Err(Error::invalid("identity_jitter must be nonnegative and blob_sigma positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

/// Blob layout shared by every identity of a class. The class fixes the
/// blob count (3 to 6) and their template placement.
fn class_template(spec: &SyntheticSpec, class: usize) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1 + class as u64);
    let count = 3 + class % 4;
    let size = spec.image_size as f64;
    let c = (size - 1.0) / 2.0;
    let offset = rng.random_range(0.0..std::f64::consts::TAU);
    (0..count)
        .map(|k| {
            let radius = size * rng.random_range(0.08..0.32);
            let angle = offset + std::f64::consts::TAU * (k as f64 + rng.random_range(-0.3..0.3)) / count as f64;
            Blob {
                cx: c + radius * angle.cos(),
                cy: c + radius * angle.sin(),
                sigma: spec.blob_sigma * rng.random_range(0.75..1.25),
                amp: rng.random_range(0.6..1.0),
            }
        })
        .collect()
}

fn identity_blobs(spec: &SyntheticSpec, template: &[Blob], identity: usize) -> Vec<Blob> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1 << 32 | identity as u64);
    let jitter = Normal::new(0.0, spec.identity_jitter.max(f64::MIN_POSITIVE)).expect("valid sigma");
    template
        .iter()
        .map(|b| Blob {
            cx: b.cx + jitter.sample(&mut rng),
            cy: b.cy + jitter.sample(&mut rng),
            sigma: b.sigma * rng.random_range(0.85..1.15),
            amp: (b.amp * rng.random_range(0.8..1.2)).min(1.0),
        })
        .collect()
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn render_blobs(size: usize, blobs: &[Blob]) -> Array2<f64> {
    Array2::from_shape_fn((size, size), |(y, x)| {
        let v: f64 = blobs
            .iter()
            .map(|b| {
                let dx = x as f64 - b.cx;
                let dy = y as f64 - b.cy;
                b.amp * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        quantize(v)
    })
}

fn bilinear(img: ArrayView2<f64>, y: f64, x: f64) -> f64 {
    let (h, w) = img.dim();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            img[[yy as usize, xx as usize]]
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1.0)) + fy * ((1.0 - fx) * at(y0 + 1.0, x0) + fx * at(y0 + 1.0, x0 + 1.0))
}

/// Resamples `base` under one transform with bilinear interpolation and zero
/// padding. A zero parameter returns `base` unchanged.
pub fn render_transform(base: ArrayView2<f64>, kind: TransformKind, param: f64) -> Array2<f64> {
    if param == 0.0 {
        return base.to_owned();
    }
    let (h, w) = base.dim();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    match kind {
        TransformKind::Rotation => {
            let (s, c) = param.to_radians().sin_cos();
            Array2::from_shape_fn((h, w), |(y, x)| {
                // Inverse map: rotate the output coordinate by −θ.
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                quantize(bilinear(base, sy, sx))
            })
        }
        TransformKind::Translation => {
            Array2::from_shape_fn((h, w), |(y, x)| quantize(bilinear(base, y as f64, x as f64 - param)))
        }
    }
}

/// Renders every identity under every transform parameter. Identity `k`
/// belongs to class `k % n_classes`. Images are ordered identity-major and
/// start in the `knn_train` split.
pub fn generate(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let size = spec.image_size;
    let templates: Vec<Vec<Blob>> = (0..spec.n_classes).map(|c| class_template(spec, c)).collect();
    let n = spec.n_identities * spec.params.len();
    let mut images = Array2::zeros((n, size * size));
    let mut meta = Vec::with_capacity(n);
    let mut row = 0;
    for identity in 0..spec.n_identities {
        let class = identity % spec.n_classes;
        let base = render_blobs(size, &identity_blobs(spec, &templates[class], identity));
        for &param in &spec.params {
            let img = render_transform(base.view(), spec.transform_kind, param);
            images.row_mut(row).assign(&img.into_shape_with_order(size * size).expect("contiguous"));
            meta.push(ImageMeta {
                identity,
                class,
                transform_param: param,
            });
            row += 1;
        }
    }
    LabeledDataset::new(size, size, PixelFormat::Gray8, images, meta, vec![Split::KnnTrain; n])
}
