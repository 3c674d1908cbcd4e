//! Fundus image normalization: locate the circular fundus, crop its tight
//! bounding square and resample to the standard network input sizes.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const MIN_SIDE: u32 = 16;

/// Pixels brighter than this (luma on the 0..=255 scale) are fundus candidates.
pub const LUMINANCE_THRESHOLD: u32 = 10;

/// Minimum share of foreground pixels for a fundus to be reported.
pub const MIN_FOREGROUND_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("no fundus detected (foreground fraction {foreground_fraction:.4})")]
    NoFundusDetected { foreground_fraction: f64 },
    #[error("invalid crop box: {0}")]
    InvalidBox(String),
    #[error("target side {0} is below the {MIN_SIDE} px minimum")]
    InvalidTarget(u32),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, PreprocessError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(PreprocessError::InvalidImage(format!(
                "{width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(PreprocessError::InvalidImage(format!(
                "buffer holds {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, PreprocessError> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn from_rgb_image(img: RgbImage) -> Result<Self, PreprocessError> {
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn into_rgb_image(self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data).expect("buffer length checked")
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        is_foreground(self.pixel(x, y))
    }
}

pub fn is_foreground([r, g, b]: [u8; 3]) -> bool {
    299 * r as u32 + 587 * g as u32 + 114 * b as u32 > LUMINANCE_THRESHOLD * 1000
}

/// Square crop in source pixel coordinates. Offsets may be negative and the
/// square may overhang the image; the overhang is filled with black.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: i64,
    pub y: i64,
    pub side: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TargetSize(u32);

impl TargetSize {
    pub const PRESETS: [u32; 5] = [256, 299, 512, 1024, 2095];

    pub fn new(side: u32) -> Result<Self, PreprocessError> {
        if side < MIN_SIDE {
            return Err(PreprocessError::InvalidTarget(side));
        }
        Ok(Self(side))
    }

    pub fn presets() -> Vec<TargetSize> {
        Self::PRESETS.iter().map(|&s| TargetSize(s)).collect()
    }

    pub fn side(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for TargetSize {
    type Error = PreprocessError;

    fn try_from(side: u32) -> Result<Self, Self::Error> {
        Self::new(side)
    }
}

impl From<TargetSize> for u32 {
    fn from(t: TargetSize) -> u32 {
        t.0
    }
}

/// Tight bounding square of the largest 4-connected foreground component,
/// centered on the component's bounding box.
pub fn detect_fundus_square(img: &RasterImage) -> Result<CropBox, PreprocessError> {
    let (w, h) = (img.width as usize, img.height as usize);
    let mask: Vec<bool> = img.data.chunks_exact(3).map(|p| is_foreground([p[0], p[1], p[2]])).collect();
    let foreground = mask.iter().filter(|&&m| m).count();
    let fraction = foreground as f64 / mask.len() as f64;
    if fraction < MIN_FOREGROUND_FRACTION {
        return Err(PreprocessError::NoFundusDetected {
            foreground_fraction: fraction,
        });
    }

    let mut seen = vec![false; mask.len()];
    let mut stack = Vec::new();
    // (size, min_x, max_x, min_y, max_y) of the largest component so far
    let mut best: Option<(usize, usize, usize, usize, usize)> = None;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut size, mut x0, mut x1, mut y0, mut y1) = (0, w, 0, h, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            size += 1;
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|b| size > b.0) {
            best = Some((size, x0, x1, y0, y1));
        }
    }

    let (_, x0, x1, y0, y1) = best.expect("foreground is nonempty");
    let side = (x1 - x0 + 1).max(y1 - y0 + 1) as i64;
    if side < MIN_SIDE as i64 {
        return Err(PreprocessError::NoFundusDetected {
            foreground_fraction: fraction,
        });
    }
    // Twice the bounding-box center keeps the arithmetic integral.
    let cx2 = (x0 + x1 + 1) as i64;
    let cy2 = (y0 + y1 + 1) as i64;
    Ok(CropBox {
        x: (cx2 - side).div_euclid(2),
        y: (cy2 - side).div_euclid(2),
        side: side as u32,
    })
}

fn catmull_rom(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

// Normalized filter taps for resampling `src` samples onto `dst` samples.
// Downscaling widens the kernel by the scale factor.
struct Taps {
    start: Vec<usize>,
    weights: Vec<Vec<f32>>,
}

fn taps(src: usize, dst: usize) -> Taps {
    let scale = src as f64 / dst as f64;
    let filter_scale = scale.max(1.0);
    let support = 2.0 * filter_scale;
    let mut start = Vec::with_capacity(dst);
    let mut weights = Vec::with_capacity(dst);
    for i in 0..dst {
        let center = (i as f64 + 0.5) * scale - 0.5;
        let lo = (center - support).ceil() as i64;
        let hi = (center + support).floor() as i64;
        let mut ws: Vec<f64> = (lo..=hi)
            .map(|j| catmull_rom((j as f64 - center) / filter_scale))
            .collect();
        let sum: f64 = ws.iter().sum();
        ws.iter_mut().for_each(|v| *v /= sum);
        // Fold taps that fall outside [0, src) onto the edge samples.
        let mut folded = vec![0.0f64; src.min((hi - lo + 1) as usize + 2)];
        let first = lo.clamp(0, src as i64 - 1) as usize;
        let mut folded_len = 0;
        for (t, wgt) in ws.iter().enumerate() {
            let j = (lo + t as i64).clamp(0, src as i64 - 1) as usize;
            let slot = j - first;
            if slot >= folded.len() {
                folded.resize(slot + 1, 0.0);
            }
            folded[slot] += wgt;
            folded_len = folded_len.max(slot + 1);
        }
        folded.truncate(folded_len);
        start.push(first);
        weights.push(folded.into_iter().map(|v| v as f32).collect());
    }
    Taps { start, weights }
}

/// Crops `bx` out of `img` (black outside the image) and resamples it to
/// `target` x `target` with a Catmull-Rom bicubic filter, channel-wise,
/// rounded and clamped to 0..=255.
pub fn crop_resize(
    img: &RasterImage,
    bx: CropBox,
    target: TargetSize,
) -> Result<RasterImage, PreprocessError> {
    if bx.side < MIN_SIDE {
        return Err(PreprocessError::InvalidBox(format!(
            "side {} is below {MIN_SIDE}",
            bx.side
        )));
    }
    let (w, h) = (img.width as i64, img.height as i64);
    let side = bx.side as i64;
    if bx.x >= w || bx.y >= h || bx.x + side <= 0 || bx.y + side <= 0 {
        return Err(PreprocessError::InvalidBox(format!(
            "{bx:?} does not overlap the {w}x{h} image"
        )));
    }

    let src = bx.side as usize;
    let dst = target.side() as usize;
    let tp = taps(src, dst);
    let fetch = |cx: usize, cy: usize, c: usize| -> f32 {
        let (x, y) = (bx.x + cx as i64, bx.y + cy as i64);
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.data[((y * w + x) * 3) as usize + c] as f32
        }
    };

    // Horizontal pass: src rows x dst columns.
    let mut rows = vec![0f32; src * dst * 3];
    rows.par_chunks_mut(dst * 3).enumerate().for_each(|(cy, out)| {
        for ox in 0..dst {
            let s = tp.start[ox];
            for c in 0..3 {
                let mut acc = 0f32;
                for (t, &wgt) in tp.weights[ox].iter().enumerate() {
                    acc += wgt * fetch(s + t, cy, c);
                }
                out[ox * 3 + c] = acc;
            }
        }
    });

    // Vertical pass.
    let mut data = vec![0u8; dst * dst * 3];
    data.par_chunks_mut(dst * 3).enumerate().for_each(|(oy, out)| {
        let s = tp.start[oy];
        for (i, px) in out.iter_mut().enumerate() {
            let mut acc = 0f32;
            for (t, &wgt) in tp.weights[oy].iter().enumerate() {
                acc += wgt * rows[(s + t) * dst * 3 + i];
            }
            *px = acc.round().clamp(0.0, 255.0) as u8;
        }
    });
    RasterImage::new(target.side(), target.side(), data)
}

pub fn encode_png(img: &RasterImage) -> Vec<u8> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Sub)
        .write_image(&img.data, img.width, img.height, ExtendedColorType::Rgb8)
        .expect("in-memory PNG encoding");
    buf
}

pub fn load_image(path: &Path) -> Result<RasterImage, PreprocessError> {
    let img = image::open(path).map_err(|e| PreprocessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    RasterImage::from_rgb_image(img.to_rgb8())
}

/// Finds `<dir>/<image_id>.{png,jpg,jpeg}`.
pub fn resolve_image_path(dir: &Path, image_id: &str) -> Option<PathBuf> {
    ["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSource {
    pub image_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NoFundusDetected,
    Io,
    InvalidImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub image_id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    /// Images for which every requested size was produced.
    pub processed: usize,
    pub failed: Vec<Failure>,
    pub per_size_counts: BTreeMap<u32, usize>,
    /// Output files created or changed by this run.
    pub rewritten: usize,
}

pub fn output_path(out_dir: &Path, side: u32, image_id: &str) -> PathBuf {
    out_dir.join(side.to_string()).join(format!("{image_id}.png"))
}

fn failure(image_id: &str, err: PreprocessError) -> Failure {
    let kind = match err {
        PreprocessError::NoFundusDetected { .. } => FailureKind::NoFundusDetected,
        PreprocessError::Io { .. } => FailureKind::Io,
        _ => FailureKind::InvalidImage,
    };
    Failure {
        image_id: image_id.to_string(),
        kind,
        message: err.to_string(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PreprocessError {
    PreprocessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

// Returns how many files were (re)written.
fn process_one(src: &ImageSource, sizes: &[TargetSize], out_dir: &Path) -> Result<usize, PreprocessError> {
    if src.image_id.is_empty()
        || src.image_id.contains(['/', '\\'])
        || src.image_id == "."
        || src.image_id == ".."
    {
        return Err(PreprocessError::InvalidImage(format!(
            "image id {:?} is not usable as a file name",
            src.image_id
        )));
    }
    let img = load_image(&src.path)?;
    let bx = detect_fundus_square(&img)?;
    let mut written = 0;
    for &size in sizes {
        let png = encode_png(&crop_resize(&img, bx, size)?);
        let path = output_path(out_dir, size.side(), &src.image_id);
        if fs::read(&path).ok().as_deref() == Some(png.as_slice()) {
            continue;
        }
        fs::write(&path, &png).map_err(|e| io_err(&path, e))?;
        written += 1;
    }
    Ok(written)
}

/// Processes every image at every size into `out_dir/<side>/<image_id>.png`.
///
/// Failures are collected per image and never abort the batch. Files whose
/// bytes would not change are left untouched. The report is ordered by
/// image id and does not depend on the rayon pool size.
pub fn run_preprocess(
    sources: &[ImageSource],
    sizes: &[TargetSize],
    out_dir: &Path,
) -> Result<PreprocessReport, PreprocessError> {
    let mut sizes = sizes.to_vec();
    sizes.sort();
    sizes.dedup();
    for size in &sizes {
        let dir = out_dir.join(size.side().to_string());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    let mut outcomes: Vec<(&str, Result<usize, PreprocessError>)> = sources
        .par_iter()
        .map(|src| (src.image_id.as_str(), process_one(src, &sizes, out_dir)))
        .collect();
    outcomes.sort_by(|a, b| a.0.cmp(b.0));

    let mut report = PreprocessReport {
        per_size_counts: sizes.iter().map(|s| (s.side(), 0)).collect(),
        ..Default::default()
    };
    for (id, outcome) in outcomes {
        match outcome {
            Ok(written) => {
                report.processed += 1;
                report.rewritten += written;
                for count in report.per_size_counts.values_mut() {
                    *count += 1;
                }
            }
            Err(e) => report.failed.push(failure(id, e)),
        }
    }
    Ok(report)
}
