use ndarray::{Array2, ArrayView2};

use super::{LabeledDataset, PixelFormat};
use crate::error::{Error, Result};
use crate::features::{lcn, LcnConfig};

/// Bilinear resize with pixel-center alignment and edge clamping.
pub fn resize_bilinear(image: ArrayView2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = image.dim();
    if (h, w) == (out_h, out_w) {
        return image.to_owned();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
        (1.0 - ty) * ((1.0 - tx) * image[[y0, x0]] + tx * image[[y0, x1]])
            + ty * ((1.0 - tx) * image[[y1, x0]] + tx * image[[y1, x1]])
    })
}

/// Optional square downsample followed by LCN on every image. Output values
/// are rounded to f32 so the float-raw file format stores them exactly.
pub fn preprocess(ds: &LabeledDataset, cfg: &LcnConfig, downsample_to: Option<usize>) -> Result<LabeledDataset> {
    let (out_h, out_w) = match downsample_to {
        Some(s) if s > ds.height || s > ds.width => {
            return Err(Error::invalid(format!(
                "cannot downsample {}x{} images to {s}x{s}",
                ds.height, ds.width
            )));
        }
        Some(0) => return Err(Error::invalid("downsample size must be positive")),
        Some(s) => (s, s),
        None => (ds.height, ds.width),
    };
    let mut images = Array2::zeros((ds.len(), out_h * out_w));
    for k in 0..ds.len() {
        let small = resize_bilinear(ds.image_2d(k), out_h, out_w);
        let normalized = lcn(small.view(), cfg)?;
        for (dst, &v) in images.row_mut(k).iter_mut().zip(normalized.iter()) {
            *dst = v as f32 as f64;
        }
    }
    LabeledDataset::new(out_h, out_w, PixelFormat::Float32, images, ds.meta.clone(), ds.splits.clone())
}
