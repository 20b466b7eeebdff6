//! Dataset directories: `manifest.csv` plus one image file per row.
//!
//! Raw images are binary PGM (`P5`, maxval 255). Preprocessed images are
//! float-raw: three u32 LE (`H`, `W`, `count`) then `H·W·count` f32 LE.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use super::{ImageMeta, LabeledDataset, PixelFormat, Split};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.csv";
const COLUMNS: [&str; 5] = ["filename", "identity", "class", "transform_param", "split"];

pub fn write_pgm(path: &Path, image: ArrayView2<f64>) -> Result<()> {
    let (h, w) = image.dim();
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend(image.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: message.to_string(),
    };
    // Header: magic, width, height, maxval, separated by whitespace with
    // optional comments, then a single whitespace byte.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5) file"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad PGM header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated PGM data"))?;
    Ok(Array2::from_shape_fn((h, w), |(y, x)| data[y * w + x] as f64 / 255.0))
}

pub fn write_float_raw(path: &Path, images: &[ArrayView2<f64>]) -> Result<()> {
    let (h, w) = images.first().map(|i| i.dim()).unwrap_or((0, 0));
    let mut bytes = Vec::with_capacity(12 + 4 * h * w * images.len());
    for d in [h, w, images.len()] {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for img in images {
        if img.dim() != (h, w) {
            return Err(Error::invalid("float-raw images must share one size"));
        }
        for &v in img.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_float_raw(path: &Path) -> Result<Vec<Array2<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    };
    if bytes.len() < 12 {
        return Err(bad("float-raw header truncated".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let (h, w, count) = (word(0), word(1), word(2));
    let expected = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(count))
        .and_then(|p| p.checked_mul(4))
        .and_then(|p| p.checked_add(12))
        .ok_or_else(|| bad("float-raw dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!("float-raw expected {expected} bytes, found {}", bytes.len())));
    }
    let floats: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(floats
        .chunks(h * w.max(1))
        .take(count)
        .map(|c| Array2::from_shape_vec((h, w), c.to_vec()).expect("sized chunk"))
        .collect())
}

fn image_name(k: usize, format: PixelFormat) -> String {
    match format {
        PixelFormat::Gray8 => format!("img_{k:05}.pgm"),
        PixelFormat::Float32 => format!("img_{k:05}.f32"),
    }
}

pub fn save_dataset(ds: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST_NAME);
    let mut out = csv::Writer::from_path(&manifest).map_err(|e| csv_io(&manifest, e))?;
    out.write_record(COLUMNS).map_err(|e| csv_io(&manifest, e))?;
    for k in 0..ds.len() {
        let name = image_name(k, ds.format);
        let path = dir.join(&name);
        match ds.format {
            PixelFormat::Gray8 => write_pgm(&path, ds.image_2d(k))?,
            PixelFormat::Float32 => write_float_raw(&path, &[ds.image_2d(k)])?,
        }
        let m = ds.meta[k];
        out.write_record([
            name,
            m.identity.to_string(),
            m.class.to_string(),
            m.transform_param.to_string(),
            ds.splits[k].as_str().to_string(),
        ])
        .map_err(|e| csv_io(&manifest, e))?;
    }
    out.flush().map_err(|e| Error::io(&manifest, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        message: e.to_string(),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let manifest: PathBuf = dir.join(MANIFEST_NAME);
    let mut reader = csv::Reader::from_path(&manifest).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(&manifest, std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string())),
        _ => csv_io(&manifest, e),
    })?;
    let headers = reader.headers().map_err(|e| csv_io(&manifest, e))?.clone();
    let mut col = [0usize; 5];
    for (slot, name) in col.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
            path: manifest.clone(),
            line: 1,
            message: format!("manifest is missing column `{name}`"),
        })?;
    }

    let mut rows = Vec::new();
    let mut meta = Vec::new();
    let mut splits = Vec::new();
    let mut format = None;
    let mut shape = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_io(&manifest, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |k: usize| record.get(col[k]).unwrap_or("").trim();
        let parse_err = |what: &str, value: &str| Error::Parse {
            path: manifest.clone(),
            line,
            message: format!("bad {what} `{value}`"),
        };
        let identity = field(1).parse().map_err(|_| parse_err("identity", field(1)))?;
        let class = field(2).parse().map_err(|_| parse_err("class", field(2)))?;
        let transform_param: f64 = field(3).parse().map_err(|_| parse_err("transform_param", field(3)))?;
        let split = Split::parse(field(4)).ok_or_else(|| parse_err("split", field(4)))?;
        let name = field(0);
        let path = dir.join(name);
        let (img, fmt) = if name.ends_with(".pgm") {
            (read_pgm(&path)?, PixelFormat::Gray8)
        } else if name.ends_with(".f32") {
            let mut imgs = read_float_raw(&path)?;
            if imgs.len() != 1 {
                return Err(parse_err("image file (expected exactly one image)", name));
            }
            (imgs.remove(0), PixelFormat::Float32)
        } else {
            return Err(parse_err("image filename", name));
        };
        if *format.get_or_insert(fmt) != fmt {
            return Err(parse_err("image format (mixed formats)", name));
        }
        if *shape.get_or_insert(img.dim()) != img.dim() {
            return Err(parse_err("image size", name));
        }
        rows.extend(img.iter().copied());
        meta.push(ImageMeta {
            identity,
            class,
            transform_param,
        });
        splits.push(split);
    }
    let (h, w) = shape.unwrap_or((0, 0));
    let images = Array2::from_shape_vec((meta.len(), h * w), rows).expect("consistent sizes");
    LabeledDataset::new(h, w, format.unwrap_or(PixelFormat::Gray8), images, meta, splits)
}
